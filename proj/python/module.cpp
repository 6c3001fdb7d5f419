// Python bindings for the core operations: model evaluation, simulation,
// sufficient statistics, the lasso engine, and the staged estimation
// pipeline. Matrices map to numpy arrays through pybind11's Eigen support.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hawkesnet/estimation.hpp"
#include "hawkesnet/experiments.hpp"
#include "hawkesnet/io.hpp"
#include "hawkesnet/lasso.hpp"
#include "hawkesnet/simulate.hpp"

namespace py = pybind11;
using namespace hawkesnet;

namespace {

HawkesParams make_params(const Mat& C, const Vec& alpha, const Vec& beta, double gamma,
                         double horizon_a) {
  HawkesParams p;
  p.C = C;
  p.alpha = alpha;
  p.beta = beta;
  p.kernel = KernelSpec(gamma, horizon_a > 0.0 ? horizon_a : KernelSpec::default_horizon(gamma));
  return p;
}

EventLog make_events(const std::vector<std::vector<double>>& times, double horizon) {
  EventLog log;
  log.times = times;
  log.horizon = horizon;
  log.validate();
  return log;
}

CovariateField make_covariates(const std::vector<double>& boundaries,
                               const std::vector<Mat>& values) {
  CovariateField field;
  field.boundaries = boundaries;
  field.values = values;
  field.validate();
  return field;
}

}  // namespace

PYBIND11_MODULE(_hawkesnet, m) {
  m.doc() = "Sparse mutually exciting network estimation";

  py::class_<KernelSpec>(m, "KernelSpec")
      .def(py::init<double, double>(), py::arg("gamma"), py::arg("horizon"))
      .def_readwrite("gamma", &KernelSpec::gamma)
      .def_readwrite("horizon", &KernelSpec::horizon)
      .def_static("default_horizon", &KernelSpec::default_horizon, py::arg("gamma"),
                  py::arg("tail_tol") = 1e-12)
      .def("dropped_tail_mass", &KernelSpec::dropped_tail_mass);

  m.def("kernel_eval", &kernel_eval, py::arg("u"), py::arg("kernel"));
  m.def("kernel_mass", &kernel_mass, py::arg("kernel"));
  m.def(
      "baseline_eval",
      [](const Vec& x, const Vec& beta) { return baseline_eval(x, beta); },
      py::arg("x"), py::arg("beta"));

  py::class_<EventLog>(m, "EventLog")
      .def(py::init(&make_events), py::arg("times"), py::arg("horizon"))
      .def_readonly("times", &EventLog::times)
      .def_readonly("horizon", &EventLog::horizon)
      .def("count", &EventLog::count)
      .def("total_events", &EventLog::total_events)
      .def_property_readonly("n", &EventLog::n);

  py::class_<CovariateField>(m, "CovariateField")
      .def(py::init(&make_covariates), py::arg("boundaries"), py::arg("values"))
      .def_static("empty", &CovariateField::empty, py::arg("n"), py::arg("horizon"))
      .def_readonly("boundaries", &CovariateField::boundaries)
      .def_readonly("values", &CovariateField::values)
      .def("value_at", &CovariateField::value_at, py::arg("node"), py::arg("t"));

  py::class_<HawkesParams>(m, "HawkesParams")
      .def(py::init(&make_params), py::arg("C"), py::arg("alpha"), py::arg("beta"),
           py::arg("gamma"), py::arg("horizon_a") = 0.0)
      .def_readwrite("C", &HawkesParams::C)
      .def_readwrite("alpha", &HawkesParams::alpha)
      .def_readwrite("beta", &HawkesParams::beta)
      .def_readwrite("kernel", &HawkesParams::kernel)
      .def_property_readonly("gamma", &HawkesParams::gamma);

  py::class_<ParamCheck>(m, "ParamCheck")
      .def_readonly("ok", &ParamCheck::ok)
      .def_readonly("branching", &ParamCheck::branching)
      .def_readonly("failures", &ParamCheck::failures);
  m.def("validate_params", &validate_params, py::arg("params"), py::arg("margin") = 0.0);
  m.def("intensity", &intensity, py::arg("params"), py::arg("events"), py::arg("covariates"),
        py::arg("t"));

  // simulation
  py::class_<DgpConfig>(m, "DgpConfig")
      .def(py::init<>())
      .def_readwrite("n", &DgpConfig::n)
      .def_readwrite("T", &DgpConfig::T)
      .def_readwrite("segment_length", &DgpConfig::segment_length)
      .def_readwrite("shock_count", &DgpConfig::shock_count)
      .def_readwrite("shock_amplitude", &DgpConfig::shock_amplitude)
      .def_readwrite("shock_decay", &DgpConfig::shock_decay)
      .def_readwrite("shock_duration", &DgpConfig::shock_duration)
      .def_readwrite("noise_sd", &DgpConfig::noise_sd)
      .def_readwrite("alpha_min", &DgpConfig::alpha_min)
      .def_readwrite("alpha_max", &DgpConfig::alpha_max)
      .def_readwrite("edge_weight", &DgpConfig::edge_weight)
      .def_readwrite("beta_true", &DgpConfig::beta_true)
      .def_readwrite("gamma_true", &DgpConfig::gamma_true)
      .def_readwrite("seed", &DgpConfig::seed)
      .def_readwrite("kernel_horizon", &DgpConfig::kernel_horizon)
      .def_readwrite("event_cap", &DgpConfig::event_cap);

  py::class_<CovariateDraw>(m, "CovariateDraw")
      .def_readonly("field", &CovariateDraw::field)
      .def_readonly("mean_path", &CovariateDraw::mean_path);
  m.def("simulate_covariates", &simulate_covariates, py::arg("config"));
  m.def("simulate_hawkes", &simulate_hawkes, py::arg("params"), py::arg("covariates"),
        py::arg("T"), py::arg("seed"), py::arg("event_cap") = 1000000);
  m.def("expected_count_stationary", &expected_count_stationary, py::arg("params"),
        py::arg("nu_bar"));

  py::class_<DgpDraw>(m, "DgpDraw")
      .def_readonly("params", &DgpDraw::params)
      .def_readonly("covariates", &DgpDraw::covariates)
      .def_readonly("covariate_mean", &DgpDraw::covariate_mean)
      .def_readonly("events", &DgpDraw::events);
  m.def("sample_dgp", &sample_dgp, py::arg("config"));

  // sufficient statistics
  py::class_<Theta>(m, "Theta")
      .def(py::init([](const Vec& beta, double gamma) { return Theta{beta, gamma}; }),
           py::arg("beta"), py::arg("gamma"))
      .def_readwrite("beta", &Theta::beta)
      .def_readwrite("gamma", &Theta::gamma);

  py::class_<SuffStats>(m, "SuffStats")
      .def_readonly("V", &SuffStats::V)
      .def_readonly("Gamma", &SuffStats::Gamma)
      .def_readonly("G", &SuffStats::G)
      .def_readonly("A", &SuffStats::Acount)
      .def_readonly("v", &SuffStats::v)
      .def_readonly("baseline_int", &SuffStats::baseline_int)
      .def_readonly("excite_int", &SuffStats::excite_int)
      .def_readonly("event_count", &SuffStats::event_count);
  m.def(
      "compute_stats",
      [](const EventLog& events, const CovariateField& cov, const Theta& theta, double t0,
         double t1, double horizon_a) {
        return compute_stats(events, cov, theta, Window{t0, t1}, horizon_a);
      },
      py::arg("events"), py::arg("covariates"), py::arg("theta"), py::arg("t0"), py::arg("t1"),
      py::arg("horizon_a"));
  m.def(
      "ls_value",
      [](const SuffStats& stats, const Vec& c, double a, int i) {
        return ls_value(stats, c, a, i);
      },
      py::arg("stats"), py::arg("c"), py::arg("a"), py::arg("node"));
  m.def("ls_total", &ls_total, py::arg("stats"), py::arg("C"), py::arg("alpha"));

  py::class_<PsdSqrt>(m, "PsdSqrt")
      .def_readonly("half", &PsdSqrt::half)
      .def_readonly("inv_half", &PsdSqrt::inv_half)
      .def_readonly("rank", &PsdSqrt::rank);
  m.def("psd_sqrt", &psd_sqrt, py::arg("gamma"), py::arg("rank_tol") = 1e-12);

  // lasso engine
  m.def("build_xtilde", &build_xtilde, py::arg("m"));
  m.def(
      "center_transform",
      [](const Vec& y, const Mat& x) {
        const CenteredData c = center_transform(y, x);
        return py::make_tuple(c.y, c.x);
      },
      py::arg("y"), py::arg("x"));
  m.def(
      "lars_lasso",
      [](const Vec& y, const Mat& x, double lam) { return lars_lasso(y, x, lam); },
      py::arg("y"), py::arg("x"), py::arg("penalty"));
  m.def(
      "solve_quadratic_lasso",
      [](const Mat& Q, const Vec& b, const Vec& weights, const std::vector<bool>& nonneg,
         double tol) {
        QuadraticLassoProblem problem;
        problem.Q = Q;
        problem.b = b;
        problem.weights = weights;
        if (!nonneg.empty()) {
          problem.signs.resize(nonneg.size());
          for (std::size_t k = 0; k < nonneg.size(); ++k)
            problem.signs[k] = nonneg[k] ? SignConstraint::kNonNegative : SignConstraint::kFree;
        }
        const LassoSolution sol = solve_quadratic_lasso(problem, tol);
        return py::make_tuple(sol.x, sol.objective, sol.kkt_residual);
      },
      py::arg("Q"), py::arg("b"), py::arg("weights"), py::arg("nonneg") = std::vector<bool>(),
      py::arg("tol") = 1e-8);
  m.def(
      "solve_row_problem",
      [](const SuffStats& stats, int i, double omega_i, double alpha_penalty, double tol) {
        const RowSolution row = solve_row_problem(stats, i, omega_i, alpha_penalty, tol);
        return py::make_tuple(row.c, row.alpha, row.objective, row.kkt_residual);
      },
      py::arg("stats"), py::arg("node"), py::arg("omega"), py::arg("alpha_penalty") = 0.0,
      py::arg("tol") = 1e-8);
  m.def(
      "nodewise_lasso",
      [](const Mat& sigma, int j, double sigma_j, const std::vector<int>& unpenalized) {
        const NodewiseResult nw = nodewise_lasso(sigma, j, sigma_j, unpenalized);
        return py::make_tuple(nw.v, nw.tau, nw.kkt_residual);
      },
      py::arg("sigma"), py::arg("j"), py::arg("sigma_j"),
      py::arg("unpenalized") = std::vector<int>());

  // estimation pipeline
  py::class_<ThetaBox>(m, "ThetaBox")
      .def_static("defaults", &ThetaBox::defaults, py::arg("p"))
      .def_readwrite("beta_lo", &ThetaBox::beta_lo)
      .def_readwrite("beta_hi", &ThetaBox::beta_hi)
      .def_readwrite("gamma_lo", &ThetaBox::gamma_lo)
      .def_readwrite("gamma_hi", &ThetaBox::gamma_hi);

  py::class_<FitOptions>(m, "FitOptions")
      .def(py::init<>())
      .def_readwrite("restarts", &FitOptions::restarts)
      .def_readwrite("tol1", &FitOptions::tol1)
      .def_readwrite("tol2", &FitOptions::tol2)
      .def_readwrite("tol3", &FitOptions::tol3)
      .def_readwrite("kkt_tol", &FitOptions::kkt_tol)
      .def_readwrite("horizon_A", &FitOptions::horizon_A)
      .def_readwrite("max_evals", &FitOptions::max_evals)
      .def_readwrite("seed", &FitOptions::seed)
      .def_readwrite("threads", &FitOptions::threads);

  py::class_<StageOneResult>(m, "StageOneResult")
      .def_readonly("C", &StageOneResult::C)
      .def_readonly("alpha", &StageOneResult::alpha)
      .def_property_readonly("beta", [](const StageOneResult& s) { return s.theta.beta; })
      .def_property_readonly("gamma", [](const StageOneResult& s) { return s.theta.gamma; })
      .def_readonly("criterion", &StageOneResult::criterion)
      .def_readonly("kkt_max", &StageOneResult::kkt_max);

  py::class_<DebiasResult>(m, "DebiasResult")
      .def_property_readonly("beta_bar", [](const DebiasResult& s) { return s.theta_bar.beta; })
      .def_property_readonly("gamma_bar", [](const DebiasResult& s) { return s.theta_bar.gamma; })
      .def_readonly("sigma_j", &DebiasResult::sigma_j)
      .def_readonly("tau_j", &DebiasResult::tau_j)
      .def_readonly("bound", &DebiasResult::bound)
      .def_readonly("realized", &DebiasResult::realized)
      .def_readonly("tau_nonpos", &DebiasResult::tau_nonpos);

  py::class_<StageThreeResult>(m, "StageThreeResult")
      .def_readonly("C", &StageThreeResult::C)
      .def_readonly("alpha", &StageThreeResult::alpha)
      .def_readonly("theta_clipped", &StageThreeResult::theta_clipped);

  m.def("stage1_fit", &stage1_fit, py::arg("events"), py::arg("covariates"), py::arg("omega"),
        py::arg("box"), py::arg("options"), py::arg("window") = std::nullopt);
  m.def("stage1_fixed_theta", &stage1_fixed_theta, py::arg("events"), py::arg("covariates"),
        py::arg("theta"), py::arg("omega"), py::arg("options"),
        py::arg("window") = std::nullopt);
  py::class_<DebiasOptions>(m, "DebiasOptions")
      .def(py::init<>())
      .def_readwrite("sigma_constant", &DebiasOptions::sigma_constant)
      .def_readwrite("max_n", &DebiasOptions::max_n);
  m.def("stage2_debias", &stage2_debias, py::arg("stage1"), py::arg("events"),
        py::arg("covariates"), py::arg("horizon_a"), py::arg("options") = DebiasOptions());
  m.def("stage3_fit", &stage3_fit, py::arg("events"), py::arg("covariates"), py::arg("theta_bar"),
        py::arg("omega"), py::arg("box"), py::arg("options"));
  m.def("compute_score", &compute_score, py::arg("events"), py::arg("covariates"),
        py::arg("params"), py::arg("window") = std::nullopt);
  m.def("compute_sigma", &compute_sigma, py::arg("events"), py::arg("covariates"),
        py::arg("params"), py::arg("window") = std::nullopt, py::arg("max_n") = 40);

  py::class_<TuningValues>(m, "TuningValues")
      .def_readonly("a_n", &TuningValues::a_n)
      .def_readonly("b_n", &TuningValues::b_n)
      .def_readonly("e_n", &TuningValues::e_n)
      .def_readonly("d_n", &TuningValues::d_n)
      .def_readonly("omega", &TuningValues::omega)
      .def_readonly("n_zero", &TuningValues::n_zero)
      .def_readonly("block_count_ok", &TuningValues::block_count_ok);
  m.def(
      "theory_tuning",
      [](const EventLog& events, const CovariateField& cov, const HawkesParams& pilot,
         const ThetaBox& box, bool omega_three_d) {
        return theory_tuning(events, cov, pilot, box, TuningConstants{},
                             omega_three_d ? OmegaRule::kThreeD : OmegaRule::kD);
      },
      py::arg("events"), py::arg("covariates"), py::arg("pilot"), py::arg("box"),
      py::arg("omega_three_d") = true);

  py::class_<CvOptions>(m, "CvOptions")
      .def(py::init<>())
      .def_readwrite("split", &CvOptions::split)
      .def_readwrite("rounds", &CvOptions::rounds)
      .def_readwrite("bracket_lo_decades", &CvOptions::bracket_lo_decades)
      .def_readwrite("bracket_hi_decades", &CvOptions::bracket_hi_decades)
      .def_readwrite("seed", &CvOptions::seed);
  py::class_<CvResult>(m, "CvResult")
      .def_readonly("omega", &CvResult::omega)
      .def_readonly("omega_init", &CvResult::omega_init);
  m.def("cross_validate", &cross_validate, py::arg("events"), py::arg("covariates"),
        py::arg("box"), py::arg("fit_options"), py::arg("cv_options"),
        py::arg("omega_init") = std::nullopt);

  m.def("compatibility_diagnostic", &compatibility_diagnostic, py::arg("stats"), py::arg("node"));
  m.def("residual_check", &residual_check, py::arg("events"), py::arg("covariates"),
        py::arg("params"), py::arg("window") = std::nullopt);

  // file interchange
  m.def("write_event_log", &write_event_log, py::arg("events"), py::arg("path"));
  m.def("read_event_log", &read_event_log, py::arg("path"), py::arg("horizon"),
        py::arg("n_nodes") = 0);
  m.def("write_covariates", &write_covariates, py::arg("field"), py::arg("path"));
  m.def("read_covariates", &read_covariates, py::arg("path"), py::arg("horizon") = 0.0);
}
