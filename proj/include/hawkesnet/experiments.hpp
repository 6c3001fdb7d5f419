#pragma once

// Replication harness: draws from the data-generating process, runs the
// configured fit scenarios, and aggregates the study tables (parameter
// bias/spread, confusion counts, per-edge detection rates).

#include <optional>
#include <string>
#include <vector>

#include "hawkesnet/estimation.hpp"
#include "hawkesnet/simulate.hpp"

namespace hawkesnet {

enum class OmegaSource { kCvOnce, kCvEach, kTheory, kExplicit };

struct StudyConfig {
  int replications = 100;
  std::vector<std::string> scenarios = {"full-stage1", "full-stage3", "slim-stage1"};
  DgpConfig dgp;
  OmegaSource omega_source = OmegaSource::kCvOnce;
  Vec omega_explicit;
  FitOptions fit;
  CvOptions cv;
  DebiasOptions debias;
  double detection_threshold = 0.0;  // exact zeros from the lasso by default
  int threads = 1;
  std::string out_dir;
  std::uint64_t master_seed = 1;

  ThetaBox box() const { return ThetaBox::defaults(static_cast<int>(dgp.beta_true.size())); }
  void validate() const;
};

struct RepRecord {
  int rep = 0;
  bool failed = false;
  std::string error;

  Mat C_true;
  Vec alpha_true;
  Vec beta_true;
  double gamma_true = 0.0;

  // full model
  bool has_full = false;
  Vec beta_check;
  double gamma_check = 0.0;
  Mat C_check;
  Vec alpha_check;
  bool has_debias = false;
  Vec beta_bar;
  double gamma_bar = 0.0;
  double debias_bound = 0.0;
  double debias_realized = 0.0;
  bool has_stage3 = false;
  Mat C_hat;
  Vec alpha_hat;

  // slim-oracle model
  bool has_slim = false;
  Mat C_slim;
  Vec alpha_slim;
};

struct Confusion {
  double tp = 0, fn = 0, fp = 0, tn = 0;
};

/// Detection means |C_hat_ij| > threshold; all n^2 cells count, diagonal
/// included.
Confusion confusion_matrix(const Mat& c_hat, const Mat& c_true, double threshold);

/// Named table with labelled rows, written/read as CSV at full precision.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::string> row_labels;
  Mat values;
};

void write_table_csv(const Table& table, const std::string& path);
Table read_table_csv(const std::string& path);

struct StudyResult {
  std::vector<RepRecord> records;
  Vec omega_used;            // empty when omega_source == kCvEach
  int failures = 0;
  std::vector<Table> tables;
};

StudyResult run_study(const StudyConfig& config);

/// Re-aggregates the tables from per-replication records (used by the
/// report command on persisted raw records).
std::vector<Table> aggregate_tables(const std::vector<RepRecord>& records,
                                    const StudyConfig& config);

/// Writes tables/*.csv, raw/rep_<k>.json and manifest.json under out_dir.
void emit_report(const StudyResult& result, const StudyConfig& config,
                 const std::string& out_dir);

std::string rep_record_to_json(const RepRecord& record);
RepRecord rep_record_from_json(const std::string& text);

std::string study_config_to_json(const StudyConfig& config);
StudyConfig study_config_from_json(const std::string& text);

}  // namespace hawkesnet
