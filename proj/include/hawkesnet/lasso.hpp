#pragma once

// L1-penalized quadratic solvers. The LARS route follows the classical
// reduction: factor the quadratic through the PSD square root, re-center
// with the orthonormal zero-column-sum design (build_xtilde), run the LARS
// path to the target penalty, then certify/polish with projected coordinate
// descent. Coordinate descent alone is the exact fallback for sign
// constraints, zero penalty weights, or rank-deficient designs.

#include <limits>
#include <vector>

#include "hawkesnet/suffstats.hpp"

namespace hawkesnet {

enum class SignConstraint { kFree, kNonNegative };

/// Objective: x' Q x - 2 b' x + 2 sum_k w_k |x_k|, optionally x_k >= 0.
struct QuadraticLassoProblem {
  Mat Q;
  Vec b;
  Vec weights;
  std::vector<SignConstraint> signs;  // empty = all free

  int dim() const { return static_cast<int>(b.size()); }
  void validate() const;
};

struct LassoSolution {
  Vec x;
  std::vector<int> active;
  double objective = 0.0;
  double kkt_residual = 0.0;
  int sweeps = 0;
  bool used_lars = false;
};

enum class LassoMethod { kAuto, kLarsPolish, kCoordinateDescent };

/// Orthonormal (3m/2 or (3m+1)/2) x m matrix with zero column sums.
Mat build_xtilde(int m);

struct CenteredData {
  Vec y;
  Mat x;
};

/// (y, X) -> (X~ y, X~ X); identical lasso objective differences, zero sums.
CenteredData center_transform(const Eigen::Ref<const Vec>& y, const Eigen::Ref<const Mat>& x);

struct LarsFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Lasso path via LARS on the centered data, stopped at `lambda`
/// (convention ||y - X c||^2 + 2 lambda ||c||_1). Throws LarsFailure on a
/// singular active Gram matrix or when the step cap (8 * dim) is exceeded.
Vec lars_lasso(const Eigen::Ref<const Vec>& y, const Eigen::Ref<const Mat>& x, double lambda);

double lasso_objective(const QuadraticLassoProblem& problem, const Vec& x);

/// Independent certificate: largest violation of the stationarity /
/// complementary-slackness conditions at x.
double lasso_kkt_residual(const QuadraticLassoProblem& problem, const Vec& x);

LassoSolution solve_quadratic_lasso(const QuadraticLassoProblem& problem, double tol = 1e-8,
                                    LassoMethod method = LassoMethod::kAuto,
                                    const Vec* warm_start = nullptr);

struct RowSolution {
  Vec c;
  double alpha = 0.0;
  double objective = 0.0;      // (1/T) LS_i + penalty
  double kkt_residual = 0.0;
  int iterations = 0;
  bool l1_bound_hit = false;   // row had to be re-penalized to stay stable
};

/// Alternating minimization of (1/T) LS_i(c, a) + 2 omega_i ||c||_1
/// (+ 2 alpha_penalty a) over c >= 0, a >= 0 at the stats' theta.
/// `row_l1_bound` caps ||c||_1 (stability); infinity disables the cap.
RowSolution solve_row_problem(const SuffStats& stats, int i, double omega_i,
                              double alpha_penalty = 0.0, double tol = 1e-8,
                              double row_l1_bound = std::numeric_limits<double>::infinity());

struct NodewiseResult {
  Vec v;            // length d-1, coefficients against the remaining columns
  double tau = 0.0;
  double kkt_residual = 0.0;
  /// || (1/tau) (e_j - v)' Sigma^2 - e_j' ||_inf evaluated at the solver's
  /// extended-precision iterate (the approximate-inverse certificate).
  double realized_gap = 0.0;
};

/// v_j = argmin ||Sigma_{.,j} - Sigma_{.,-j} v||^2 + 2 sigma_j ||v_pen||_1,
/// with `unpenalized` original-column indices carrying zero penalty;
/// tau_j = (Sigma^2)_{jj} - (Sigma^2)_{j,-j} v_j.
NodewiseResult nodewise_lasso(const Mat& sigma, int j, double sigma_j,
                              const std::vector<int>& unpenalized = {});

/// Same, but takes the precomputed square Sigma2 = Sigma * Sigma.
NodewiseResult nodewise_lasso_sq(const Mat& sigma2, int j, double sigma_j,
                                 const std::vector<int>& unpenalized = {});

}  // namespace hawkesnet
