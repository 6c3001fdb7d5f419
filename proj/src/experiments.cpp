#include "hawkesnet/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "hawkesnet/io.hpp"
#include "hawkesnet/rng.hpp"
#include "hawkesnet/threadpool.hpp"

namespace hawkesnet {

namespace fs = std::filesystem;

void StudyConfig::validate() const {
  if (replications < 1) throw std::invalid_argument("StudyConfig: replications must be >= 1");
  if (scenarios.empty()) throw std::invalid_argument("StudyConfig: scenario list is empty");
  for (const auto& s : scenarios)
    if (s != "full-stage1" && s != "full-stage3" && s != "slim-stage1")
      throw std::invalid_argument("StudyConfig: unknown scenario '" + s + "'");
  if (omega_source == OmegaSource::kExplicit && omega_explicit.size() != dgp.n)
    throw std::invalid_argument("StudyConfig: explicit omega must have one entry per node");
  dgp.validate();
}

Confusion confusion_matrix(const Mat& c_hat, const Mat& c_true, double threshold) {
  if (c_hat.rows() != c_true.rows() || c_hat.cols() != c_true.cols())
    throw std::invalid_argument("confusion_matrix: shape mismatch");
  Confusion out;
  for (int i = 0; i < c_hat.rows(); ++i)
    for (int j = 0; j < c_hat.cols(); ++j) {
      const bool detected = std::abs(c_hat(i, j)) > threshold;
      const bool real = c_true(i, j) != 0.0;
      if (real && detected) out.tp += 1;
      else if (real) out.fn += 1;
      else if (detected) out.fp += 1;
      else out.tn += 1;
    }
  return out;
}

void write_table_csv(const Table& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "row";
  for (const auto& c : table.columns) out << ',' << c;
  out << '\n';
  for (int r = 0; r < table.values.rows(); ++r) {
    out << table.row_labels[r];
    for (int c = 0; c < table.values.cols(); ++c) out << ',' << format_double(table.values(r, c));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Table read_table_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  Table table;
  table.name = fs::path(path).stem().string();
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty table");
  {
    std::stringstream ss(line);
    std::string field;
    bool first = true;
    while (std::getline(ss, field, ',')) {
      if (first) {
        first = false;
        continue;
      }
      table.columns.push_back(field);
    }
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');
    table.row_labels.push_back(field);
    std::vector<double> row;
    while (std::getline(ss, field, ',')) row.push_back(std::stod(field));
    if (row.size() != table.columns.size())
      throw std::runtime_error(path + ": ragged row in table");
    rows.push_back(std::move(row));
  }
  table.values = Mat(rows.size(), table.columns.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) table.values(r, c) = rows[r][c];
  return table;
}

namespace {

bool has_scenario(const StudyConfig& config, const std::string& name) {
  return std::find(config.scenarios.begin(), config.scenarios.end(), name) !=
         config.scenarios.end();
}

std::uint64_t rep_seed(std::uint64_t master, int rep) {
  return RngStream::substream(master, 20000 + static_cast<std::uint64_t>(rep)).next_u64();
}

RepRecord run_replication(const StudyConfig& config, const Vec& omega_shared, int rep) {
  RepRecord record;
  record.rep = rep;
  DgpConfig dgp = config.dgp;
  dgp.seed = rep_seed(config.master_seed, rep);
  const DgpDraw draw = sample_dgp(dgp);
  record.C_true = draw.params.C;
  record.alpha_true = draw.params.alpha;
  record.beta_true = draw.params.beta;
  record.gamma_true = draw.params.kernel.gamma;

  const ThetaBox box = config.box();
  FitOptions fit = config.fit;
  fit.threads = 1;  // replications are the parallel axis
  fit.seed = dgp.seed ^ 0x9d2c5680;

  Vec omega = omega_shared;
  if (config.omega_source == OmegaSource::kCvEach) {
    CvOptions cv = config.cv;
    cv.seed = dgp.seed;
    omega = cross_validate(draw.events, draw.covariates, box, fit, cv).omega;
  }

  const bool need_full = has_scenario(config, "full-stage1") || has_scenario(config, "full-stage3");
  if (need_full) {
    const StageOneResult s1 = stage1_fit(draw.events, draw.covariates, omega, box, fit);
    record.has_full = true;
    record.beta_check = s1.theta.beta;
    record.gamma_check = s1.theta.gamma;
    record.C_check = s1.C;
    record.alpha_check = s1.alpha;
    if (has_scenario(config, "full-stage3")) {
      const double A = fit.resolved_horizon(box);
      const DebiasResult s2 = stage2_debias(s1, draw.events, draw.covariates, A, config.debias);
      record.has_debias = true;
      record.beta_bar = s2.theta_bar.beta;
      record.gamma_bar = s2.theta_bar.gamma;
      record.debias_bound = s2.bound;
      record.debias_realized = s2.realized;
      const StageThreeResult s3 =
          stage3_fit(draw.events, draw.covariates, s2.theta_bar, omega, box, fit);
      record.has_stage3 = true;
      record.C_hat = s3.C;
      record.alpha_hat = s3.alpha;
    }
  }
  if (has_scenario(config, "slim-stage1")) {
    // oracle comparison: no covariates, gamma pinned to the truth
    Theta slim_theta;
    slim_theta.beta = Vec(0);
    slim_theta.gamma = dgp.gamma_true;
    const CovariateField none = CovariateField::empty(dgp.n, dgp.T);
    const StageOneResult s1 = stage1_fixed_theta(draw.events, none, slim_theta, omega, fit);
    record.has_slim = true;
    record.C_slim = s1.C;
    record.alpha_slim = s1.alpha;
  }
  return record;
}

struct SummaryStats {
  double mean_bias = 0, median_bias = 0, sd = 0, mad = 0, rmse = 0;
  int count = 0;
};

double median(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t m = xs.size() / 2;
  return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

// Bias/spread against a per-sample truth. SD uses the N-1 denominator;
// RMSE^2 = mean_bias^2 + SD^2 (N-1)/N by construction. MAD is the unscaled
// median absolute deviation from the median.
SummaryStats summarize(const std::vector<double>& estimates, const std::vector<double>& truths) {
  SummaryStats s;
  s.count = static_cast<int>(estimates.size());
  if (s.count == 0) return s;
  std::vector<double> errors(estimates.size());
  for (std::size_t k = 0; k < estimates.size(); ++k) errors[k] = estimates[k] - truths[k];
  const double mean = std::accumulate(errors.begin(), errors.end(), 0.0) / s.count;
  s.mean_bias = mean;
  s.median_bias = median(errors);
  double ss = 0, rss = 0;
  for (double e : errors) {
    ss += (e - mean) * (e - mean);
    rss += e * e;
  }
  s.sd = s.count > 1 ? std::sqrt(ss / (s.count - 1)) : 0.0;
  s.rmse = std::sqrt(rss / s.count);
  std::vector<double> dev(errors.size());
  const double med = median(errors);
  for (std::size_t k = 0; k < errors.size(); ++k) dev[k] = std::abs(errors[k] - med);
  s.mad = median(dev);
  return s;
}

void append_summary_row(Table& table, const std::string& label, const SummaryStats& s) {
  table.row_labels.push_back(label);
  const int r = static_cast<int>(table.row_labels.size());
  table.values.conservativeResize(r, 6);
  table.values.row(r - 1) << s.mean_bias, s.median_bias, s.sd, s.mad, s.rmse,
      static_cast<double>(s.count);
}

Table make_summary_table(const std::string& name) {
  Table t;
  t.name = name;
  t.columns = {"mean_bias", "median_bias", "sd", "mad", "rmse", "count"};
  t.values = Mat(0, 6);
  return t;
}

std::vector<double> histogram_counts(const std::vector<double>& xs, double lo, double hi, int bins) {
  std::vector<double> counts(bins, 0.0);
  for (double x : xs) {
    if (x < lo || x > hi) continue;  // outlier-exclusion convention
    int b = static_cast<int>((x - lo) / (hi - lo) * bins);
    if (b == bins) b = bins - 1;
    counts[b] += 1.0;
  }
  return counts;
}

}  // namespace

std::vector<Table> aggregate_tables(const std::vector<RepRecord>& records,
                                    const StudyConfig& config) {
  const int n = config.dgp.n;
  const int p = static_cast<int>(config.dgp.beta_true.size());
  std::vector<const RepRecord*> ok;
  for (const auto& r : records)
    if (!r.failed) ok.push_back(&r);

  std::vector<Table> tables;

  // ---- global parameter table (full model only) ----
  {
    Table t = make_summary_table("beta_gamma");
    for (int q = 0; q < p; ++q) {
      std::vector<double> est, truth, est_bar;
      for (const auto* r : ok)
        if (r->has_full) {
          est.push_back(r->beta_check[q]);
          truth.push_back(r->beta_true[q]);
        }
      append_summary_row(t, "beta" + std::to_string(q + 1) + "_stage1", summarize(est, truth));
      std::vector<double> truth_bar;
      for (const auto* r : ok)
        if (r->has_debias) {
          est_bar.push_back(r->beta_bar[q]);
          truth_bar.push_back(r->beta_true[q]);
        }
      append_summary_row(t, "beta" + std::to_string(q + 1) + "_debiased",
                         summarize(est_bar, truth_bar));
    }
    std::vector<double> g1, gt1, g2, gt2;
    for (const auto* r : ok) {
      if (r->has_full) {
        g1.push_back(r->gamma_check);
        gt1.push_back(r->gamma_true);
      }
      if (r->has_debias) {
        g2.push_back(r->gamma_bar);
        gt2.push_back(r->gamma_true);
      }
    }
    append_summary_row(t, "gamma_stage1", summarize(g1, gt1));
    append_summary_row(t, "gamma_debiased", summarize(g2, gt2));
    tables.push_back(std::move(t));
  }

  // ---- confusion counts per scenario ----
  {
    Table t;
    t.name = "confusion";
    t.columns = {"tp", "fn", "fp", "tn", "count"};
    t.values = Mat(0, 5);
    auto add_scenario = [&](const std::string& label, auto member, auto has_member) {
      Confusion acc;
      int count = 0;
      for (const auto* r : ok) {
        if (!(r->*has_member)) continue;
        const Confusion c = confusion_matrix(r->*member, r->C_true, config.detection_threshold);
        acc.tp += c.tp;
        acc.fn += c.fn;
        acc.fp += c.fp;
        acc.tn += c.tn;
        ++count;
      }
      t.row_labels.push_back(label);
      const int row = static_cast<int>(t.row_labels.size());
      t.values.conservativeResize(row, 5);
      const double denom = count > 0 ? count : 1;
      t.values.row(row - 1) << acc.tp / denom, acc.fn / denom, acc.fp / denom, acc.tn / denom,
          static_cast<double>(count);
    };
    if (has_scenario(config, "full-stage1"))
      add_scenario("full_stage1", &RepRecord::C_check, &RepRecord::has_full);
    if (has_scenario(config, "full-stage3"))
      add_scenario("full_stage3", &RepRecord::C_hat, &RepRecord::has_stage3);
    if (has_scenario(config, "slim-stage1"))
      add_scenario("slim_stage1", &RepRecord::C_slim, &RepRecord::has_slim);
    tables.push_back(std::move(t));
  }

  // ---- non-zero C entries, conditional on the cell being a true edge ----
  auto edge_table = [&](const std::string& name, auto member, auto has_member) {
    Table t = make_summary_table(name);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        std::vector<double> est, truth;
        for (const auto* r : ok) {
          if (!(r->*has_member) || r->C_true(i, j) == 0.0) continue;
          est.push_back((r->*member)(i, j));
          truth.push_back(r->C_true(i, j));
        }
        if (est.empty()) continue;
        append_summary_row(t, "C_" + std::to_string(i + 1) + "_" + std::to_string(j + 1),
                           summarize(est, truth));
      }
    return t;
  };
  if (has_scenario(config, "full-stage1"))
    tables.push_back(edge_table("c_nonzero_full_stage1", &RepRecord::C_check, &RepRecord::has_full));
  if (has_scenario(config, "full-stage3"))
    tables.push_back(edge_table("c_nonzero_full_stage3", &RepRecord::C_hat, &RepRecord::has_stage3));
  if (has_scenario(config, "slim-stage1"))
    tables.push_back(edge_table("c_nonzero_slim_stage1", &RepRecord::C_slim, &RepRecord::has_slim));

  // ---- alpha per node, per scenario ----
  auto alpha_table = [&](const std::string& name, auto member, auto has_member) {
    Table t = make_summary_table(name);
    for (int i = 0; i < n; ++i) {
      std::vector<double> est, truth;
      for (const auto* r : ok) {
        if (!(r->*has_member)) continue;
        est.push_back((r->*member)[i]);
        truth.push_back(r->alpha_true[i]);
      }
      append_summary_row(t, "alpha_" + std::to_string(i + 1), summarize(est, truth));
    }
    return t;
  };
  if (has_scenario(config, "full-stage1"))
    tables.push_back(alpha_table("alpha_full_stage1", &RepRecord::alpha_check, &RepRecord::has_full));
  if (has_scenario(config, "full-stage3"))
    tables.push_back(alpha_table("alpha_full_stage3", &RepRecord::alpha_hat, &RepRecord::has_stage3));
  if (has_scenario(config, "slim-stage1"))
    tables.push_back(alpha_table("alpha_slim_stage1", &RepRecord::alpha_slim, &RepRecord::has_slim));

  // ---- detection percentages and mean weights per edge ----
  auto grid_tables = [&](const std::string& suffix, auto member, auto has_member) {
    Table det, wt;
    det.name = "detections_" + suffix;
    wt.name = "edge_weights_" + suffix;
    det.columns = wt.columns = {};
    for (int j = 0; j < n; ++j) {
      det.columns.push_back("to_" + std::to_string(j + 1));
      wt.columns.push_back("to_" + std::to_string(j + 1));
    }
    det.values = Mat::Zero(n, n);
    wt.values = Mat::Zero(n, n);
    int count = 0;
    for (const auto* r : ok) {
      if (!(r->*has_member)) continue;
      ++count;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          if (std::abs((r->*member)(i, j)) > config.detection_threshold) det.values(i, j) += 1.0;
          wt.values(i, j) += (r->*member)(i, j);
        }
    }
    if (count > 0) {
      det.values *= 100.0 / count;
      wt.values /= count;
    }
    for (int i = 0; i < n; ++i) {
      det.row_labels.push_back("from_" + std::to_string(i + 1));
      wt.row_labels.push_back("from_" + std::to_string(i + 1));
    }
    tables.push_back(std::move(det));
    tables.push_back(std::move(wt));
  };
  if (has_scenario(config, "full-stage1"))
    grid_tables("full_stage1", &RepRecord::C_check, &RepRecord::has_full);
  if (has_scenario(config, "full-stage3"))
    grid_tables("full_stage3", &RepRecord::C_hat, &RepRecord::has_stage3);
  if (has_scenario(config, "slim-stage1"))
    grid_tables("slim_stage1", &RepRecord::C_slim, &RepRecord::has_slim);

  // ---- histogram bins for the de-biased global parameters ----
  auto hist_table = [&](const std::string& name, double lo, double hi, auto get1, auto get2) {
    const int bins = 40;
    Table t;
    t.name = name;
    t.columns = {"bin_lo", "bin_hi", "count_stage1", "count_debiased"};
    t.values = Mat(bins, 4);
    std::vector<double> b1, b2;
    for (const auto* r : ok) {
      if (r->has_full) b1.push_back(get1(*r));
      if (r->has_debias) b2.push_back(get2(*r));
    }
    const auto c1 = histogram_counts(b1, lo, hi, bins);
    const auto c2 = histogram_counts(b2, lo, hi, bins);
    for (int b = 0; b < bins; ++b) {
      t.row_labels.push_back("bin" + std::to_string(b + 1));
      const double bin_lo = lo + (hi - lo) * b / bins;
      t.values.row(b) << bin_lo, bin_lo + (hi - lo) / bins, c1[b], c2[b];
    }
    tables.push_back(std::move(t));
  };
  if (has_scenario(config, "full-stage3")) {
    // beta estimates restricted to [-3, 3]: values stuck at the box edge
    // are treated as non-converged and excluded
    if (p > 0)
      hist_table("hist_beta", -3.0, 3.0,
                 [](const RepRecord& r) { return r.beta_check[0]; },
                 [](const RepRecord& r) { return r.beta_bar[0]; });
    hist_table("hist_gamma", 0.0, 5.0,
               [](const RepRecord& r) { return r.gamma_check; },
               [](const RepRecord& r) { return r.gamma_bar; });
  }

  // ---- per-replication edge-separation margin (true vs spurious weight) ----
  {
    Table t;
    t.name = "edge_separation";
    t.columns = {"true_edge_mean", "non_edge_mean", "separated"};
    t.values = Mat(0, 3);
    auto member = has_scenario(config, "full-stage1") ? &RepRecord::C_check : &RepRecord::C_hat;
    auto has_member = has_scenario(config, "full-stage1") ? &RepRecord::has_full : &RepRecord::has_stage3;
    for (const auto* r : ok) {
      if (!(r->*has_member)) continue;
      double true_sum = 0, true_n = 0, non_sum = 0, non_n = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          if (r->C_true(i, j) != 0.0) {
            true_sum += (r->*member)(i, j);
            true_n += 1;
          } else {
            non_sum += (r->*member)(i, j);
            non_n += 1;
          }
        }
      const double tm = true_n > 0 ? true_sum / true_n : 0.0;
      const double nm = non_n > 0 ? non_sum / non_n : 0.0;
      t.row_labels.push_back("rep" + std::to_string(r->rep));
      const int row = static_cast<int>(t.row_labels.size());
      t.values.conservativeResize(row, 3);
      t.values.row(row - 1) << tm, nm, tm > nm ? 1.0 : 0.0;
    }
    tables.push_back(std::move(t));
  }

  return tables;
}

StudyResult run_study(const StudyConfig& config) {
  config.validate();
  StudyResult result;

  Vec omega_shared;
  if (config.omega_source == OmegaSource::kExplicit) {
    omega_shared = config.omega_explicit;
  } else if (config.omega_source == OmegaSource::kCvOnce ||
             config.omega_source == OmegaSource::kTheory) {
    DgpConfig dgp1 = config.dgp;
    dgp1.seed = rep_seed(config.master_seed, 1);
    const DgpDraw draw = sample_dgp(dgp1);
    const ThetaBox box = config.box();
    if (config.omega_source == OmegaSource::kCvOnce) {
      FitOptions fit = config.fit;
      fit.threads = config.threads;
      fit.seed = dgp1.seed ^ 0x85ebca6b;
      CvOptions cv = config.cv;
      cv.seed = dgp1.seed;
      omega_shared = cross_validate(draw.events, draw.covariates, box, fit, cv).omega;
    } else {
      omega_shared =
          theory_tuning(draw.events, draw.covariates, draw.params, box).omega;
    }
  }
  result.omega_used = omega_shared;

  result.records.resize(config.replications);
  parallel_for(config.replications, config.threads, [&](std::size_t k) {
    const int rep = static_cast<int>(k) + 1;
    try {
      result.records[k] = run_replication(config, omega_shared, rep);
    } catch (const std::exception& e) {
      result.records[k] = RepRecord{};
      result.records[k].rep = rep;
      result.records[k].failed = true;
      result.records[k].error = e.what();
    }
  });
  for (const auto& r : result.records)
    if (r.failed) ++result.failures;

  result.tables = aggregate_tables(result.records, config);
  if (!config.out_dir.empty()) emit_report(result, config, config.out_dir);
  return result;
}

namespace {

nlohmann::json vec_json(const Vec& v) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}
nlohmann::json mat_json(const Mat& m) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(row);
  }
  return out;
}
Vec vec_from(const nlohmann::json& j) {
  Vec v(j.size());
  for (std::size_t k = 0; k < j.size(); ++k) v[k] = j[k].get<double>();
  return v;
}
Mat mat_from(const nlohmann::json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  return m;
}

}  // namespace

std::string rep_record_to_json(const RepRecord& r) {
  nlohmann::json j;
  j["rep"] = r.rep;
  j["failed"] = r.failed;
  j["error"] = r.error;
  j["C_true"] = mat_json(r.C_true);
  j["alpha_true"] = vec_json(r.alpha_true);
  j["beta_true"] = vec_json(r.beta_true);
  j["gamma_true"] = r.gamma_true;
  j["has_full"] = r.has_full;
  if (r.has_full) {
    j["beta_check"] = vec_json(r.beta_check);
    j["gamma_check"] = r.gamma_check;
    j["C_check"] = mat_json(r.C_check);
    j["alpha_check"] = vec_json(r.alpha_check);
  }
  j["has_debias"] = r.has_debias;
  if (r.has_debias) {
    j["beta_bar"] = vec_json(r.beta_bar);
    j["gamma_bar"] = r.gamma_bar;
    j["debias_bound"] = r.debias_bound;
    j["debias_realized"] = r.debias_realized;
  }
  j["has_stage3"] = r.has_stage3;
  if (r.has_stage3) {
    j["C_hat"] = mat_json(r.C_hat);
    j["alpha_hat"] = vec_json(r.alpha_hat);
  }
  j["has_slim"] = r.has_slim;
  if (r.has_slim) {
    j["C_slim"] = mat_json(r.C_slim);
    j["alpha_slim"] = vec_json(r.alpha_slim);
  }
  return j.dump();
}

RepRecord rep_record_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  RepRecord r;
  r.rep = j.at("rep").get<int>();
  r.failed = j.at("failed").get<bool>();
  r.error = j.at("error").get<std::string>();
  r.C_true = mat_from(j.at("C_true"));
  r.alpha_true = vec_from(j.at("alpha_true"));
  r.beta_true = vec_from(j.at("beta_true"));
  r.gamma_true = j.at("gamma_true").get<double>();
  r.has_full = j.at("has_full").get<bool>();
  if (r.has_full) {
    r.beta_check = vec_from(j.at("beta_check"));
    r.gamma_check = j.at("gamma_check").get<double>();
    r.C_check = mat_from(j.at("C_check"));
    r.alpha_check = vec_from(j.at("alpha_check"));
  }
  r.has_debias = j.at("has_debias").get<bool>();
  if (r.has_debias) {
    r.beta_bar = vec_from(j.at("beta_bar"));
    r.gamma_bar = j.at("gamma_bar").get<double>();
    r.debias_bound = j.at("debias_bound").get<double>();
    r.debias_realized = j.at("debias_realized").get<double>();
  }
  r.has_stage3 = j.at("has_stage3").get<bool>();
  if (r.has_stage3) {
    r.C_hat = mat_from(j.at("C_hat"));
    r.alpha_hat = vec_from(j.at("alpha_hat"));
  }
  r.has_slim = j.at("has_slim").get<bool>();
  if (r.has_slim) {
    r.C_slim = mat_from(j.at("C_slim"));
    r.alpha_slim = vec_from(j.at("alpha_slim"));
  }
  return r;
}

std::string study_config_to_json(const StudyConfig& c) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["replications"] = c.replications;
  j["scenarios"] = c.scenarios;
  j["omega_source"] = c.omega_source == OmegaSource::kCvOnce    ? "cv_once"
                      : c.omega_source == OmegaSource::kCvEach  ? "cv_each"
                      : c.omega_source == OmegaSource::kTheory  ? "theory"
                                                                : "explicit";
  if (c.omega_explicit.size() > 0) j["omega_explicit"] = vec_json(c.omega_explicit);
  j["detection_threshold"] = c.detection_threshold;
  j["threads"] = c.threads;
  j["master_seed"] = c.master_seed;
  j["out_dir"] = c.out_dir;

  nlohmann::json d;
  d["n"] = c.dgp.n;
  d["T"] = c.dgp.T;
  d["segment_length"] = c.dgp.segment_length;
  d["shock_count"] = c.dgp.shock_count;
  d["shock_amplitude"] = c.dgp.shock_amplitude;
  d["shock_decay"] = c.dgp.shock_decay;
  d["shock_duration"] = c.dgp.shock_duration;
  d["noise_sd"] = c.dgp.noise_sd;
  d["alpha_range"] = {c.dgp.alpha_min, c.dgp.alpha_max};
  d["edge_weight"] = c.dgp.edge_weight;
  d["beta_true"] = vec_json(c.dgp.beta_true);
  d["gamma_true"] = c.dgp.gamma_true;
  d["seed"] = c.dgp.seed;
  d["decay_law"] = c.dgp.decay_law == ShockDecayLaw::kMultiplicative ? "multiplicative" : "exponential";
  d["kernel_horizon"] = c.dgp.kernel_horizon;
  d["event_cap"] = c.dgp.event_cap;
  j["dgp"] = d;

  nlohmann::json f;
  f["restarts"] = c.fit.restarts;
  f["tol1"] = c.fit.tol1;
  f["tol2"] = c.fit.tol2;
  f["tol3"] = c.fit.tol3;
  f["kkt_tol"] = c.fit.kkt_tol;
  f["horizon_A"] = c.fit.horizon_A;
  f["max_evals"] = c.fit.max_evals;
  j["fit"] = f;

  nlohmann::json v;
  v["split"] = c.cv.split;
  v["rounds"] = c.cv.rounds;
  v["bracket_lo_decades"] = c.cv.bracket_lo_decades;
  v["bracket_hi_decades"] = c.cv.bracket_hi_decades;
  j["cv"] = v;
  return j.dump(2);
}

StudyConfig study_config_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  StudyConfig c;
  if (j.contains("schema_version") && j.at("schema_version").get<int>() != 1)
    throw std::invalid_argument("study config: unsupported schema_version");
  c.replications = j.value("replications", c.replications);
  if (j.contains("scenarios")) c.scenarios = j.at("scenarios").get<std::vector<std::string>>();
  const std::string src = j.value("omega_source", std::string("cv_once"));
  c.omega_source = src == "cv_once"   ? OmegaSource::kCvOnce
                   : src == "cv_each" ? OmegaSource::kCvEach
                   : src == "theory"  ? OmegaSource::kTheory
                   : src == "explicit"
                       ? OmegaSource::kExplicit
                       : throw std::invalid_argument("study config: unknown omega_source " + src);
  if (j.contains("omega_explicit")) c.omega_explicit = vec_from(j.at("omega_explicit"));
  c.detection_threshold = j.value("detection_threshold", 0.0);
  c.threads = j.value("threads", 1);
  c.master_seed = j.value("master_seed", static_cast<std::uint64_t>(1));
  c.out_dir = j.value("out_dir", std::string());

  if (j.contains("dgp")) {
    const auto& d = j.at("dgp");
    c.dgp.n = d.value("n", c.dgp.n);
    c.dgp.T = d.value("T", c.dgp.T);
    c.dgp.segment_length = d.value("segment_length", c.dgp.segment_length);
    c.dgp.shock_count = d.value("shock_count", c.dgp.shock_count);
    c.dgp.shock_amplitude = d.value("shock_amplitude", c.dgp.shock_amplitude);
    c.dgp.shock_decay = d.value("shock_decay", c.dgp.shock_decay);
    c.dgp.shock_duration = d.value("shock_duration", c.dgp.shock_duration);
    c.dgp.noise_sd = d.value("noise_sd", c.dgp.noise_sd);
    if (d.contains("alpha_range")) {
      c.dgp.alpha_min = d.at("alpha_range")[0].get<double>();
      c.dgp.alpha_max = d.at("alpha_range")[1].get<double>();
    }
    c.dgp.edge_weight = d.value("edge_weight", c.dgp.edge_weight);
    if (d.contains("beta_true")) c.dgp.beta_true = vec_from(d.at("beta_true"));
    c.dgp.gamma_true = d.value("gamma_true", c.dgp.gamma_true);
    c.dgp.seed = d.value("seed", c.dgp.seed);
    if (d.contains("decay_law"))
      c.dgp.decay_law = d.at("decay_law").get<std::string>() == "exponential"
                            ? ShockDecayLaw::kExponential
                            : ShockDecayLaw::kMultiplicative;
    c.dgp.kernel_horizon = d.value("kernel_horizon", 0.0);
    c.dgp.event_cap = d.value("event_cap", c.dgp.event_cap);
  }
  if (j.contains("fit")) {
    const auto& f = j.at("fit");
    c.fit.restarts = f.value("restarts", c.fit.restarts);
    c.fit.tol1 = f.value("tol1", c.fit.tol1);
    c.fit.tol2 = f.value("tol2", c.fit.tol2);
    c.fit.tol3 = f.value("tol3", c.fit.tol3);
    c.fit.kkt_tol = f.value("kkt_tol", c.fit.kkt_tol);
    c.fit.horizon_A = f.value("horizon_A", c.fit.horizon_A);
    c.fit.max_evals = f.value("max_evals", c.fit.max_evals);
  }
  if (j.contains("cv")) {
    const auto& v = j.at("cv");
    c.cv.split = v.value("split", c.cv.split);
    c.cv.rounds = v.value("rounds", c.cv.rounds);
    c.cv.bracket_lo_decades = v.value("bracket_lo_decades", c.cv.bracket_lo_decades);
    c.cv.bracket_hi_decades = v.value("bracket_hi_decades", c.cv.bracket_hi_decades);
  }
  return c;
}

void emit_report(const StudyResult& result, const StudyConfig& config,
                 const std::string& out_dir) {
  fs::create_directories(fs::path(out_dir) / "tables");
  fs::create_directories(fs::path(out_dir) / "raw");
  for (const auto& t : result.tables)
    write_table_csv(t, (fs::path(out_dir) / "tables" / (t.name + ".csv")).string());
  for (const auto& r : result.records)
    write_text_file((fs::path(out_dir) / "raw" / ("rep_" + std::to_string(r.rep) + ".json")).string(),
                    rep_record_to_json(r));

  const std::string config_json = study_config_to_json(config);
  nlohmann::json manifest;
  manifest["schema_version"] = 1;
  manifest["config_digest"] = digest_hex(config_json);
  manifest["master_seed"] = config.master_seed;
  manifest["replications"] = config.replications;
  manifest["failures"] = result.failures;
  if (result.omega_used.size() > 0) {
    nlohmann::json w = nlohmann::json::array();
    for (int i = 0; i < result.omega_used.size(); ++i) w.push_back(result.omega_used[i]);
    manifest["omega_used"] = w;
  }
  nlohmann::json digests;
  for (const auto& t : result.tables) {
    const auto path = fs::path(out_dir) / "tables" / (t.name + ".csv");
    digests[t.name + ".csv"] = digest_file(path.string());
  }
  manifest["table_digests"] = digests;
  write_text_file((fs::path(out_dir) / "config.json").string(), config_json);
  write_text_file((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2));
}

}  // namespace hawkesnet
