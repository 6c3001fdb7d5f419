// Command-line front end: simulate / fit / cv / bench / report.
// Every run writes a manifest with the config digest, seeds, and
// input/output file digests so runs can be reproduced and audited.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hawkesnet/estimation.hpp"
#include "hawkesnet/experiments.hpp"
#include "hawkesnet/io.hpp"
#include "hawkesnet/simulate.hpp"
#include "hawkesnet/threadpool.hpp"

namespace fs = std::filesystem;
using namespace hawkesnet;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::string& config_text, std::uint64_t seed,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  nlohmann::json m;
  m["version"] = kVersion;
  m["command"] = command;
  m["timestamp"] = timestamp_utc();
  m["seed"] = seed;
  m["config_digest"] = digest_hex(config_text);
  nlohmann::json in_digests, out_digests;
  for (const auto& path : inputs) in_digests[fs::path(path).filename().string()] = digest_file(path);
  for (const auto& path : outputs) out_digests[fs::path(path).filename().string()] = digest_file(path);
  m["input_digests"] = in_digests;
  m["output_digests"] = out_digests;
  write_text_file((fs::path(out_dir) / "manifest.json").string(), m.dump(2));
}

DgpConfig dgp_from_json_file(const std::string& path) {
  const auto j = nlohmann::json::parse(read_text_file(path));
  nlohmann::json wrapper;
  wrapper["dgp"] = j.contains("dgp") ? j.at("dgp") : j;
  if (j.contains("schema_version")) wrapper["schema_version"] = j.at("schema_version");
  return study_config_from_json(wrapper.dump()).dgp;
}

int run_simulate(const std::string& config_path, const std::string& out_dir,
                 std::uint64_t seed_override, bool has_seed) {
  DgpConfig config = dgp_from_json_file(config_path);
  if (has_seed) config.seed = seed_override;
  fs::create_directories(out_dir);

  const DgpDraw draw = sample_dgp(config);
  const std::string events_path = (fs::path(out_dir) / "events.csv").string();
  const std::string cov_path = (fs::path(out_dir) / "covariates.csv").string();
  write_event_log(draw.events, events_path);
  write_covariates(draw.covariates, cov_path);

  const ParamCheck check = validate_params(draw.params);
  nlohmann::json info;
  info["seed"] = config.seed;
  info["branching_a0"] = check.branching;
  info["horizon_T"] = config.T;
  info["kernel_horizon_A"] = draw.params.kernel.horizon;
  info["dropped_tail_mass"] = draw.params.kernel.dropped_tail_mass();
  nlohmann::json counts = nlohmann::json::array();
  for (int i = 0; i < draw.events.n(); ++i) counts.push_back(draw.events.count(i));
  info["event_counts"] = counts;
  nlohmann::json c_true = nlohmann::json::array();
  for (int i = 0; i < config.n; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < config.n; ++j) row.push_back(draw.params.C(i, j));
    c_true.push_back(row);
  }
  info["C_true"] = c_true;
  nlohmann::json alpha = nlohmann::json::array();
  for (int i = 0; i < config.n; ++i) alpha.push_back(draw.params.alpha[i]);
  info["alpha_true"] = alpha;
  const std::string info_path = (fs::path(out_dir) / "truth.json").string();
  write_text_file(info_path, info.dump(2));

  write_manifest(out_dir, "simulate", read_text_file(config_path), config.seed, {config_path},
                 {events_path, cov_path, info_path});
  std::cout << "simulated " << draw.events.total_events() << " events over T=" << config.T
            << " (a0=" << check.branching << ") -> " << out_dir << "\n";
  return 0;
}

struct FitCli {
  std::string events_path, covariates_path, out_path = "fit_report.json";
  double horizon = 0.0;
  int stages = 3;
  std::string omega = "cv";
  std::string omega_file;
  int restarts = 10;
  double tol1 = 1e-4, tol2 = 1e-3, tol3 = 1e-6;
  double gamma_lo = 0.1, gamma_hi = 5.0, beta_lo = -10.0, beta_hi = 10.0;
  double cv_split = 0.0;
  int cv_rounds = 8;
  std::uint64_t seed = 1;
  int threads = 0;
};

int run_fit(const FitCli& cli) {
  const CovariateField covariates = read_covariates(cli.covariates_path, cli.horizon);
  const double T = cli.horizon > 0.0 ? cli.horizon : covariates.horizon();
  const EventLog events = read_event_log(cli.events_path, T, covariates.n());

  ThetaBox box = ThetaBox::defaults(covariates.p());
  box.beta_lo.setConstant(cli.beta_lo);
  box.beta_hi.setConstant(cli.beta_hi);
  box.gamma_lo = cli.gamma_lo;
  box.gamma_hi = cli.gamma_hi;

  FitOptions opts;
  opts.restarts = cli.restarts;
  opts.tol1 = cli.tol1;
  opts.tol2 = cli.tol2;
  opts.tol3 = cli.tol3;
  opts.seed = cli.seed;
  opts.threads = cli.threads > 0 ? cli.threads : default_thread_count();

  FitReport report;
  report.stages = cli.stages;
  report.horizon_A = opts.resolved_horizon(box);
  report.dropped_tail_mass = KernelSpec(box.gamma_lo, report.horizon_A).dropped_tail_mass();

  Vec omega;
  if (cli.omega == "cv") {
    CvOptions cv;
    cv.split = cli.cv_split;
    cv.rounds = cli.cv_rounds;
    cv.seed = cli.seed;
    const CvResult res = cross_validate(events, covariates, box, opts, cv);
    omega = res.omega;
    report.omega_source = "cv";
  } else if (cli.omega == "theory") {
    HawkesParams pilot;
    pilot.C = Mat::Zero(events.n(), events.n());
    pilot.alpha = Vec::Ones(events.n());
    pilot.beta = Vec::Zero(covariates.p());
    pilot.kernel = KernelSpec(0.5 * (box.gamma_lo + box.gamma_hi), report.horizon_A);
    report.tuning = theory_tuning(events, covariates, pilot, box);
    omega = report.tuning.omega;
    report.omega_source = "theory";
  } else {
    const auto j = nlohmann::json::parse(read_text_file(cli.omega));
    omega = Vec(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) omega[i] = j[i].get<double>();
    if (omega.size() != events.n())
      throw std::runtime_error("omega file must carry one value per node");
    report.omega_source = "file:" + cli.omega;
  }

  report.stage1 = stage1_fit(events, covariates, omega, box, opts);
  Theta theta_final = report.stage1.theta;
  Mat c_final = report.stage1.C;
  Vec alpha_final = report.stage1.alpha;

  if (cli.stages >= 2) {
    report.stage2 = stage2_debias(report.stage1, events, covariates, report.horizon_A);
    theta_final = box.clip(report.stage2->theta_bar);
  }
  if (cli.stages >= 3) {
    report.stage3 =
        stage3_fit(events, covariates, report.stage2->theta_bar, omega, box, opts);
    c_final = report.stage3->C;
    alpha_final = report.stage3->alpha;
    theta_final = report.stage3->theta_used;
  }

  HawkesParams final_params;
  final_params.C = c_final;
  final_params.alpha = alpha_final;
  final_params.beta = theta_final.beta;
  final_params.kernel = KernelSpec(theta_final.gamma, report.horizon_A);
  report.residuals = residual_check(events, covariates, final_params);
  const SuffStats stats = compute_stats(events, covariates, theta_final,
                                        Window{0.0, T}, report.horizon_A);
  report.compatibility = Vec(events.n());
  for (int i = 0; i < events.n(); ++i) report.compatibility[i] = compatibility_diagnostic(stats, i);

  write_text_file(cli.out_path, fit_report_to_json(report));
  const fs::path out_dir = fs::path(cli.out_path).parent_path();
  write_manifest(out_dir.empty() ? "." : out_dir.string(), "fit",
                 cli.events_path + "|" + cli.covariates_path + "|stages=" + std::to_string(cli.stages),
                 cli.seed, {cli.events_path, cli.covariates_path}, {cli.out_path});
  std::cout << "fit complete; report -> " << cli.out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse mutually exciting network estimation"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Draw covariates and an event log from the DGP");
  std::string sim_config, sim_out = "sim_out";
  std::uint64_t sim_seed = 0;
  bool sim_has_seed = false;
  sim->add_option("--config", sim_config, "DGP config JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", sim_out, "output directory");
  auto* seed_opt = sim->add_option("--seed", sim_seed, "seed override");

  // fit
  auto* fit = app.add_subcommand("fit", "Run the staged estimation pipeline");
  FitCli fit_cli;
  fit->add_option("--events", fit_cli.events_path, "events CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--covariates", fit_cli.covariates_path, "covariates CSV")
      ->required()
      ->check(CLI::ExistingFile);
  fit->add_option("--horizon", fit_cli.horizon, "observation horizon T (default: inferred)");
  fit->add_option("--out", fit_cli.out_path, "output report JSON");
  fit->add_option("--stages", fit_cli.stages, "1 = penalized fit, 2 = +de-bias, 3 = +refit")
      ->check(CLI::Range(1, 3));
  fit->add_option("--omega", fit_cli.omega, "cv | theory | path to a JSON array");
  fit->add_option("--restarts", fit_cli.restarts, "random starts for the theta search");
  fit->add_option("--tol1", fit_cli.tol1, "inner alternation tolerance");
  fit->add_option("--tol2", fit_cli.tol2, "restart refinement tolerance");
  fit->add_option("--tol3", fit_cli.tol3, "final refinement tolerance");
  fit->add_option("--gamma-lo", fit_cli.gamma_lo, "decay search box lower bound");
  fit->add_option("--gamma-hi", fit_cli.gamma_hi, "decay search box upper bound");
  fit->add_option("--beta-lo", fit_cli.beta_lo, "coefficient box lower bound");
  fit->add_option("--beta-hi", fit_cli.beta_hi, "coefficient box upper bound");
  fit->add_option("--cv-split", fit_cli.cv_split, "training window end (default 2T/3)");
  fit->add_option("--cv-rounds", fit_cli.cv_rounds, "cross-validation rounds");
  fit->add_option("--seed", fit_cli.seed, "seed");
  fit->add_option("--threads", fit_cli.threads, "worker threads (default: HAWKESNET_THREADS or cores)");

  // cv
  auto* cv = app.add_subcommand("cv", "Cross-validate the per-node penalties");
  FitCli cv_cli;
  std::string cv_out = "omega.json";
  cv->add_option("--events", cv_cli.events_path, "events CSV")->required()->check(CLI::ExistingFile);
  cv->add_option("--covariates", cv_cli.covariates_path, "covariates CSV")
      ->required()
      ->check(CLI::ExistingFile);
  cv->add_option("--horizon", cv_cli.horizon, "observation horizon T");
  cv->add_option("--split", cv_cli.cv_split, "training window end S (default 2T/3)");
  cv->add_option("--rounds", cv_cli.cv_rounds, "golden-section rounds");
  cv->add_option("--restarts", cv_cli.restarts, "random starts per fit");
  cv->add_option("--seed", cv_cli.seed, "seed");
  cv->add_option("--threads", cv_cli.threads, "worker threads");
  cv->add_option("--out", cv_out, "output JSON (per-node omega array)");

  // bench
  auto* bench = app.add_subcommand("bench", "Run the replication study");
  std::string bench_config, bench_out = "study_out";
  int bench_reps = 0;
  int bench_threads = 0;
  std::uint64_t bench_seed = 0;
  bool bench_has_seed = false;
  bench->add_option("--config", bench_config, "study config JSON")->required()->check(CLI::ExistingFile);
  bench->add_option("--out", bench_out, "output directory");
  bench->add_option("--reps", bench_reps, "replication count override");
  bench->add_option("--threads", bench_threads, "worker threads");
  auto* bseed = bench->add_option("--seed", bench_seed, "master seed override");

  // report
  auto* rep = app.add_subcommand("report", "Re-aggregate tables from raw records");
  std::string rep_raw, rep_out = "report_out";
  rep->add_option("--raw", rep_raw, "directory of rep_<k>.json files (or a study out dir)")
      ->required();
  rep->add_option("--out", rep_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) {
      sim_has_seed = seed_opt->count() > 0;
      return run_simulate(sim_config, sim_out, sim_seed, sim_has_seed);
    }
    if (fit->parsed()) return run_fit(fit_cli);
    if (cv->parsed()) {
      const CovariateField covariates = read_covariates(cv_cli.covariates_path, cv_cli.horizon);
      const double T = cv_cli.horizon > 0.0 ? cv_cli.horizon : covariates.horizon();
      const EventLog events = read_event_log(cv_cli.events_path, T, covariates.n());
      const ThetaBox box = ThetaBox::defaults(covariates.p());
      FitOptions opts;
      opts.restarts = cv_cli.restarts;
      opts.seed = cv_cli.seed;
      opts.threads = cv_cli.threads > 0 ? cv_cli.threads : default_thread_count();
      CvOptions cvo;
      cvo.split = cv_cli.cv_split;
      cvo.rounds = cv_cli.cv_rounds;
      cvo.seed = cv_cli.seed;
      const CvResult res = cross_validate(events, covariates, box, opts, cvo);
      nlohmann::json out = nlohmann::json::array();
      for (int i = 0; i < res.omega.size(); ++i) out.push_back(res.omega[i]);
      write_text_file(cv_out, out.dump(2));
      std::cout << "cross-validated omega -> " << cv_out << "\n";
      return 0;
    }
    if (bench->parsed()) {
      StudyConfig config = study_config_from_json(read_text_file(bench_config));
      if (bench_reps > 0) config.replications = bench_reps;
      config.threads = bench_threads > 0 ? bench_threads : default_thread_count();
      if (bseed->count() > 0) {
        bench_has_seed = true;
        config.master_seed = bench_seed;
      }
      (void)bench_has_seed;
      config.out_dir = bench_out;
      const StudyResult result = run_study(config);
      std::cout << "study complete: " << config.replications - result.failures << "/"
                << config.replications << " replications ok -> " << bench_out << "\n";
      return result.failures == config.replications ? 2 : 0;
    }
    if (rep->parsed()) {
      fs::path raw_dir = rep_raw;
      if (fs::exists(raw_dir / "raw")) raw_dir /= "raw";
      StudyConfig config;
      const fs::path config_path = fs::path(rep_raw) / "config.json";
      if (fs::exists(config_path)) config = study_config_from_json(read_text_file(config_path.string()));
      std::vector<RepRecord> records;
      for (const auto& entry : fs::directory_iterator(raw_dir)) {
        if (entry.path().extension() != ".json") continue;
        if (entry.path().filename().string().rfind("rep_", 0) != 0) continue;
        records.push_back(rep_record_from_json(read_text_file(entry.path().string())));
      }
      if (records.empty()) throw std::runtime_error("no rep_<k>.json records under " + raw_dir.string());
      std::sort(records.begin(), records.end(),
                [](const RepRecord& a, const RepRecord& b) { return a.rep < b.rep; });
      if (config.dgp.n == 0 || records[0].C_true.rows() != config.dgp.n)
        config.dgp.n = static_cast<int>(records[0].C_true.rows());
      fs::create_directories(fs::path(rep_out) / "tables");
      for (const auto& t : aggregate_tables(records, config))
        write_table_csv(t, (fs::path(rep_out) / "tables" / (t.name + ".csv")).string());
      std::cout << "re-aggregated " << records.size() << " records -> " << rep_out << "\n";
      return 0;
    }
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
