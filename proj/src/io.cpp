#include "hawkesnet/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hawkesnet {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

double parse_double(const std::string& s, const std::string& path, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad number '" + s + "'");
  }
}

}  // namespace

void write_event_log(const EventLog& events, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "node,id,time\n";
  for (int i = 0; i < events.n(); ++i)
    for (std::size_t k = 0; k < events.times[i].size(); ++k)
      out << (i + 1) << ',' << (k + 1) << ',' << format_double(events.times[i][k]) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

EventLog read_event_log(const std::string& path, double horizon, int n_nodes) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line).size() < 3 || split_csv_line(line)[0] != "node")
    throw std::runtime_error(path + ":1: expected header node,id,time");

  EventLog log;
  log.horizon = horizon;
  log.times.resize(std::max(n_nodes, 0));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 3)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 3 fields");
    const int node = static_cast<int>(parse_double(fields[0], path, line_no));
    if (node < 1) throw std::runtime_error(path + ":" + std::to_string(line_no) + ": node ids are 1-based");
    if (static_cast<int>(log.times.size()) < node) log.times.resize(node);
    log.times[node - 1].push_back(parse_double(fields[2], path, line_no));
  }
  for (auto& ts : log.times)
    if (!std::is_sorted(ts.begin(), ts.end()))
      throw std::runtime_error(path + ": event times not sorted per node");
  log.validate();
  return log;
}

void write_covariates(const CovariateField& field, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "segment_start,node";
  for (int q = 0; q < field.p(); ++q) out << ",x" << (q + 1);
  out << '\n';
  for (int r = 0; r < field.num_segments(); ++r)
    for (int i = 0; i < field.n(); ++i) {
      out << format_double(field.boundaries[r]) << ',' << (i + 1);
      for (int q = 0; q < field.p(); ++q) out << ',' << format_double(field.values[r](i, q));
      out << '\n';
    }
  if (!out) throw std::runtime_error("write failed: " + path);
}

CovariateField read_covariates(const std::string& path, double horizon) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ":1: empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "segment_start")
    throw std::runtime_error(path + ":1: expected header segment_start,node,x1,...");
  const int p = static_cast<int>(header.size()) - 2;

  struct Row {
    double start;
    int node;
    std::vector<double> x;
  };
  std::vector<Row> rows;
  int n = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != p + 2)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": wrong field count");
    Row row;
    row.start = parse_double(fields[0], path, line_no);
    row.node = static_cast<int>(parse_double(fields[1], path, line_no));
    if (row.node < 1) throw std::runtime_error(path + ":" + std::to_string(line_no) + ": node ids are 1-based");
    n = std::max(n, row.node);
    for (int q = 0; q < p; ++q) row.x.push_back(parse_double(fields[2 + q], path, line_no));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": no data rows");

  std::vector<double> starts;
  for (const auto& row : rows) starts.push_back(row.start);
  std::sort(starts.begin(), starts.end());
  starts.erase(std::unique(starts.begin(), starts.end()), starts.end());

  CovariateField field;
  field.boundaries = starts;
  if (horizon > 0.0) {
    if (horizon <= starts.back()) throw std::runtime_error(path + ": horizon not beyond last segment start");
    field.boundaries.push_back(horizon);
  } else {
    const double width =
        starts.size() >= 2 ? starts.back() - starts[starts.size() - 2] : starts.back();
    field.boundaries.push_back(starts.back() + (width > 0 ? width : 1.0));
  }
  field.values.assign(starts.size(), Mat::Zero(n, p));
  for (const auto& row : rows) {
    const auto it = std::lower_bound(starts.begin(), starts.end(), row.start);
    const int r = static_cast<int>(it - starts.begin());
    for (int q = 0; q < p; ++q) field.values[r](row.node - 1, q) = row.x[q];
  }
  field.validate();
  return field;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string digest_hex(const std::string& bytes) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

std::string digest_file(const std::string& path) { return digest_hex(read_text_file(path)); }

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace hawkesnet
