#pragma once

// Core domain types for a mutually exciting point process network with
// covariate-driven baselines:
//
//   lambda_i(t) = alpha_i * exp(x_i(t)' beta)
//               + sum_j C_ij * sum_{events s of j, s < t, t-s <= A} exp(-gamma (t-s))
//
// Stability requires max_i ||C_{i.}||_1 * integral(kernel) < 1.

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace hawkesnet {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Exponential excitation kernel exp(-gamma*u), truncated to [0, horizon].
struct KernelSpec {
  double gamma = 1.0;
  double horizon = 0.0;  // truncation support; must be > 0

  KernelSpec() = default;
  KernelSpec(double gamma_, double horizon_) : gamma(gamma_), horizon(horizon_) {}

  /// Horizon such that the kernel value at the cut is <= tail_tol.
  static double default_horizon(double gamma, double tail_tol = 1e-12);
  static KernelSpec with_default_horizon(double gamma, double tail_tol = 1e-12);

  /// Kernel mass dropped by the truncation: integral over (horizon, inf).
  double dropped_tail_mass() const;
  void validate() const;
};

/// g(u) = exp(-gamma*u) for 0 <= u <= horizon, 0 beyond. Throws on u < 0.
double kernel_eval(double u, const KernelSpec& kernel);

/// integral_0^horizon g = (1 - exp(-gamma*horizon)) / gamma.
double kernel_mass(const KernelSpec& kernel);

/// exp(x' beta); dimensions must agree. Empty x/beta gives 1.
double baseline_eval(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& beta);

/// Full parameter set (C, alpha, theta=(beta,gamma)) with the kernel horizon.
struct HawkesParams {
  Mat C;             // n x n, non-negative excitation weights
  Vec alpha;         // n, non-negative activity multipliers
  Vec beta;          // p, covariate coefficients (p may be 0)
  KernelSpec kernel; // carries gamma and the truncation horizon

  int n() const { return static_cast<int>(alpha.size()); }
  int p() const { return static_cast<int>(beta.size()); }
  double gamma() const { return kernel.gamma; }
};

/// Result of the stability/sign check; `branching` is
/// a0 = max_i ||C_{i.}||_1 * kernel_mass, and membership requires a0 < 1.
struct ParamCheck {
  bool ok = false;
  double branching = 0.0;
  std::vector<std::string> failures;
};

/// Validates non-negativity and the strict stability bound a0 < 1 - margin.
ParamCheck validate_params(const HawkesParams& params, double margin = 0.0);

/// Per-node event times on (0, T], strictly increasing within a node.
struct EventLog {
  std::vector<std::vector<double>> times;  // index 0..n-1
  double horizon = 0.0;                    // T

  int n() const { return static_cast<int>(times.size()); }
  std::size_t total_events() const;
  int count(int node) const { return static_cast<int>(times.at(node).size()); }
  void validate() const;  // throws on unsorted/out-of-range times
};

/// Piecewise-constant covariate paths on a shared segment grid.
/// The value on [s_{r-1}, s_r) is values[r-1]; the grid covers [0, T].
struct CovariateField {
  std::vector<double> boundaries;  // s_0 = 0 < s_1 < ... < s_R = T
  std::vector<Mat> values;         // R matrices, each n x p

  int n() const { return values.empty() ? 0 : static_cast<int>(values.front().rows()); }
  int p() const { return values.empty() ? 0 : static_cast<int>(values.front().cols()); }
  int num_segments() const { return static_cast<int>(values.size()); }
  double horizon() const { return boundaries.empty() ? 0.0 : boundaries.back(); }

  /// Closed-on-the-left segment lookup: t in [s_{r-1}, s_r) -> r-1.
  /// t == T maps to the final segment.
  int segment_index(double t) const;
  Vec value_at(int node, double t) const;

  /// A field with no covariates (p = 0): baseline_eval degenerates to 1.
  static CovariateField empty(int n, double T);
  void validate() const;
};

/// lambda(t) per node; events strictly before t enter the excitation sum.
Vec intensity(const HawkesParams& params, const EventLog& events,
              const CovariateField& covariates, double t);

}  // namespace hawkesnet
