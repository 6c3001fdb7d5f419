#pragma once

// Three-stage pipeline:
//   1. joint penalized fit: random-start simplex search over theta around an
//      inner alternation that solves the per-node row lassos exactly,
//   2. node-wise-lasso de-biasing of theta,
//   3. per-node refit at the de-biased theta.
// Plus theory-guided tuning values, time-split cross-validation with
// per-node golden-section updates, and fit diagnostics.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hawkesnet/lasso.hpp"
#include "hawkesnet/model.hpp"
#include "hawkesnet/suffstats.hpp"

namespace hawkesnet {

struct ThetaBox {
  Vec beta_lo, beta_hi;
  double gamma_lo = 0.1, gamma_hi = 5.0;

  static ThetaBox defaults(int p);  // [-10,10]^p x [0.1,5]
  int p() const { return static_cast<int>(beta_lo.size()); }
  Theta clip(const Theta& theta) const;
  bool contains(const Theta& theta) const;
};

struct FitOptions {
  int restarts = 10;     // K random theta starts
  double tol1 = 1e-4;    // inner alternation progress
  double tol2 = 1e-3;    // per-restart simplex tolerance
  double tol3 = 1e-6;    // final refinement tolerance
  double kkt_tol = 1e-8; // certification of the returned row solutions
  double horizon_A = 0.0;          // 0 = horizon covering the whole gamma box
  double stability_margin = 1e-6;  // strictness margin for the row L1 bound
  int max_evals = 400;   // simplex evaluations per restart
  std::uint64_t seed = 0;
  int threads = 1;

  double resolved_horizon(const ThetaBox& box) const {
    return horizon_A > 0.0 ? horizon_A : KernelSpec::default_horizon(box.gamma_lo);
  }
};

/// Joint alternation at fixed theta: exact row lassos, closed-form alpha.
struct RowsFit {
  Mat C;
  Vec alpha;
  double criterion = 0.0;  // (1/n) sum_i [ LS_i/T + 2 omega_i ||C_i||_1 ]
  double kkt_max = 0.0;
  bool l1_bound_hit = false;
};

RowsFit fit_rows(const SuffStats& stats, const Vec& omega, double tol,
                 double stability_margin = 1e-6, double alpha_penalty = 0.0);

/// Criterion value after profiling out (C, alpha) at this theta.
double profile_criterion(const StatsBuilder& builder, const Theta& theta, const Vec& omega,
                         double tol_inner, double stability_margin = 1e-6);

struct RestartTrace {
  Theta start;
  Theta end;
  double criterion = 0.0;
  int evals = 0;
};

struct StageOneResult {
  Mat C;
  Vec alpha;
  Theta theta;
  double criterion = 0.0;
  double kkt_max = 0.0;
  bool theta_fixed = false;  // slim-style fit at a known theta
  bool l1_bound_hit = false;
  std::vector<RestartTrace> restarts;
};

StageOneResult stage1_fit(const EventLog& events, const CovariateField& covariates,
                          const Vec& omega, const ThetaBox& box, const FitOptions& opts,
                          std::optional<Window> window = {});

/// Row-only fit with theta held fixed (the covariate-free oracle variant
/// passes an empty-beta theta with the known gamma).
StageOneResult stage1_fixed_theta(const EventLog& events, const CovariateField& covariates,
                                  const Theta& theta, const Vec& omega, const FitOptions& opts,
                                  std::optional<Window> window = {});

/// Parameter stack order: beta (p), gamma, alpha (n), C row-major (n^2).
int stack_dim(int n, int p);

/// Gradient of (1/(n n T)) ... precisely: grad of (1/(nT)) sum_i LS_i at params.
Vec compute_score(const EventLog& events, const CovariateField& covariates,
                  const HawkesParams& params, std::optional<Window> window = {});

/// Hessian Sigma_n = (1/(nT)) sum_i d^2 LS_i, assembled blockwise.
/// Refuses above `max_n` nodes (the matrix is (p+1+n+n^2)^2).
Mat compute_sigma(const EventLog& events, const CovariateField& covariates,
                  const HawkesParams& params, std::optional<Window> window = {}, int max_n = 40);

struct DebiasOptions {
  // sigma_j = c sqrt(log D/(nT)) sqrt((S^2)_jj); the small default keeps the
  // approximate inverse tight enough for the correction to bite
  double sigma_constant = 0.01;
  int max_n = 40;
};

struct DebiasResult {
  Theta theta_bar;
  Vec sigma_j;          // p+1 node-wise penalties
  Vec tau_j;            // p+1
  double bound = 0.0;   // max_j sigma_j / tau_j
  double realized = 0.0;  // || Theta_theta Sigma - J ||_max
  std::vector<int> tau_nonpos;  // rows flagged and left un-debias-ed
  Vec score_theta;      // first p+1 score entries at the stage-1 estimate
};

DebiasResult stage2_debias(const StageOneResult& stage1, const EventLog& events,
                           const CovariateField& covariates, double horizon_A,
                           const DebiasOptions& opts = {});

struct StageThreeResult {
  Mat C;
  Vec alpha;
  Theta theta_used;
  bool theta_clipped = false;
  double kkt_max = 0.0;
};

StageThreeResult stage3_fit(const EventLog& events, const CovariateField& covariates,
                            const Theta& theta_bar, const Vec& omega, const ThetaBox& box,
                            const FitOptions& opts);

struct TuningConstants {
  double mu = 1.0;       // must satisfy mu > exp(mu) - mu - 1
  double n_zero = 0.0;   // 0 = smallest value making the block-count event hold
  double alpha1 = 1.0, alpha2 = 1.0, alpha3 = 1.0, alpha4 = 1.0;
  double k_alpha = 0.0;  // 0 = max pilot alpha
  int beta_grid = 16;    // grid points per beta coordinate for the suprema
  int gamma_grid = 32;
};

enum class OmegaRule { kThreeD, kD };  // omega_i = 3 d_i (default) or d_i

struct TuningValues {
  double a_n = 0.0, b_n = 0.0, e_n = 0.0;
  Vec d_n;     // per node
  Vec omega;   // derived from d_n by the rule
  double mu = 0.0, n_zero = 0.0, k_alpha = 0.0;
  double alpha1 = 0.0, alpha2 = 0.0, alpha3 = 0.0, alpha4 = 0.0;
  bool block_count_ok = true;  // the event-count indicator held
};

TuningValues theory_tuning(const EventLog& events, const CovariateField& covariates,
                           const HawkesParams& pilot, const ThetaBox& box,
                           const TuningConstants& constants = {},
                           OmegaRule rule = OmegaRule::kThreeD,
                           std::optional<Window> window = {});

struct CvOptions {
  double split = 0.0;      // S; 0 = 2T/3
  int rounds = 8;          // M
  // log10 search bracket relative to the theory anchor; the theory values
  // sit orders of magnitude above the useful range, so the bracket covers
  // the moderate-penalty zone a few decades below the anchor
  double bracket_lo_decades = -4.5;
  double bracket_hi_decades = -3.2;
  std::uint64_t seed = 0;
};

struct CvRound {
  Vec omega;     // probed values this round
  Vec test_ls;   // per-node LS on [S, T] for the previous round's fit
};

struct CvResult {
  Vec omega;                 // per-node argmin over probed values
  Vec omega_init;            // theory values the bracket was anchored at
  std::vector<CvRound> trace;
};

CvResult cross_validate(const EventLog& events, const CovariateField& covariates,
                        const ThetaBox& box, const FitOptions& fit_opts,
                        const CvOptions& cv_opts, std::optional<Vec> omega_init = {});

/// Smallest eigenvalue of (1/T) [[V_ii, G_i.], [G_i.', Gamma]].
double compatibility_diagnostic(const SuffStats& stats, int i);

/// N_i(T) - integral of lambda_i over the window, exact via the stats mesh.
Vec residual_check(const EventLog& events, const CovariateField& covariates,
                   const HawkesParams& params, std::optional<Window> window = {});

struct FitReport {
  int stages = 1;
  StageOneResult stage1;
  std::optional<DebiasResult> stage2;
  std::optional<StageThreeResult> stage3;
  TuningValues tuning;
  std::string omega_source;
  Vec residuals;        // at the final fitted parameters
  Vec compatibility;    // per-node diagnostic at the final theta
  double horizon_A = 0.0;
  double dropped_tail_mass = 0.0;
};

std::string fit_report_to_json(const FitReport& report);

}  // namespace hawkesnet
