#include "hawkesnet/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace hawkesnet {

namespace {
constexpr double kTinyDiagonal = 1e-14;  // relative; below this a coordinate stays inactive
constexpr int kMaxSweeps = 100000;
}  // namespace

void QuadraticLassoProblem::validate() const {
  const int d = dim();
  if (Q.rows() != d || Q.cols() != d) throw std::invalid_argument("lasso: Q/b dimension mismatch");
  if (weights.size() != d) throw std::invalid_argument("lasso: weights dimension mismatch");
  if ((weights.array() < 0.0).any()) throw std::invalid_argument("lasso: negative penalty weight");
  if (!signs.empty() && static_cast<int>(signs.size()) != d)
    throw std::invalid_argument("lasso: signs dimension mismatch");
  if (d > 0) {
    const double asym = (Q - Q.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-8 * std::max(1.0, Q.cwiseAbs().maxCoeff()))
      throw std::invalid_argument("lasso: Q is not symmetric");
  }
}

Mat build_xtilde(int m) {
  if (m < 2) throw std::invalid_argument("build_xtilde: m must be >= 2");
  const double s6_6 = std::sqrt(6.0) / 6.0;
  const double s2_2 = std::sqrt(2.0) / 2.0;
  const double s6_3 = std::sqrt(6.0) / 3.0;

  const bool odd = (m % 2) != 0;
  const int pairs = odd ? (m - 1) / 2 : m / 2;
  const int rows = odd ? (3 * m + 1) / 2 : 3 * m / 2;
  Mat xt = Mat::Zero(rows, m);

  for (int k = 0; k < pairs; ++k) {
    const int col = 2 * k;
    xt(2 * k, col) = s6_6;
    xt(2 * k, col + 1) = -s2_2;
    xt(2 * k + 1, col) = s6_6;
    xt(2 * k + 1, col + 1) = s2_2;
  }
  int row = 2 * pairs;
  if (odd) xt(row++, m - 1) = s2_2;
  for (int k = 0; k < pairs; ++k) xt(row++, 2 * k) = -s6_3;
  if (odd) xt(row++, m - 1) = -s2_2;
  return xt;
}

CenteredData center_transform(const Eigen::Ref<const Vec>& y, const Eigen::Ref<const Mat>& x) {
  if (x.rows() != y.size()) throw std::invalid_argument("center_transform: dimension mismatch");
  const Mat xt = build_xtilde(static_cast<int>(y.size()));
  return {xt * y, xt * x};
}

Vec lars_lasso(const Eigen::Ref<const Vec>& y_raw, const Eigen::Ref<const Mat>& x_raw, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("lars_lasso: negative penalty");
  if (y_raw.size() < 2) {
    // the centering design needs m >= 2; a zero row changes nothing
    Vec y_pad = Vec::Zero(2);
    Mat x_pad = Mat::Zero(2, x_raw.cols());
    y_pad.head(y_raw.size()) = y_raw;
    x_pad.topRows(x_raw.rows()) = x_raw;
    return lars_lasso(y_pad, x_pad, lambda);
  }
  const CenteredData data = center_transform(y_raw, x_raw);
  const Mat& x = data.x;
  const int q = static_cast<int>(x.cols());
  const int max_steps = 8 * std::max(q, 1);

  Vec beta = Vec::Zero(q);
  Vec residual = data.y;
  Vec corr = x.transpose() * residual;
  std::vector<bool> in_active(q, false);
  std::vector<int> active;

  double lam = corr.cwiseAbs().maxCoeff();
  if (lam <= lambda || q == 0) return beta;

  for (int step = 0; step < max_steps; ++step) {
    // admit all columns at the current correlation level
    for (int k = 0; k < q; ++k)
      if (!in_active[k] && std::abs(corr[k]) >= lam * (1.0 - 1e-12)) {
        in_active[k] = true;
        active.push_back(k);
      }

    const int a = static_cast<int>(active.size());
    Mat gram(a, a);
    Vec sign_vec(a);
    for (int r = 0; r < a; ++r) {
      sign_vec[r] = corr[active[r]] >= 0.0 ? 1.0 : -1.0;
      for (int c = 0; c < a; ++c) gram(r, c) = x.col(active[r]).dot(x.col(active[c]));
    }
    Eigen::LDLT<Mat> ldlt(gram);
    if (ldlt.info() != Eigen::Success) throw LarsFailure("lars_lasso: active Gram factorization failed");
    const Vec dir = ldlt.solve(sign_vec);
    if (!dir.allFinite() || (gram * dir - sign_vec).cwiseAbs().maxCoeff() > 1e-6 * std::max(1.0, lam))
      throw LarsFailure("lars_lasso: singular active Gram matrix");

    // correlations move as corr -= gamma * (X' X_A dir); active ones at unit rate
    Vec fit_dir = Vec::Zero(x.rows());
    for (int r = 0; r < a; ++r) fit_dir += x.col(active[r]) * dir[r];
    const Vec corr_dir = x.transpose() * fit_dir;

    double gamma_max = lam - lambda;  // reaching the target penalty
    int joiner = -1, dropper = -1;
    // joins solve |corr_k - gamma * corr_dir_k| = lam - gamma
    for (int k = 0; k < q; ++k) {
      if (in_active[k]) continue;
      const double d1 = (lam - corr[k]) / (1.0 - corr_dir[k]);
      const double d2 = (lam + corr[k]) / (1.0 + corr_dir[k]);
      for (const double g : {d1, d2})
        if (g > 1e-14 && g < gamma_max) {
          gamma_max = g;
          joiner = k;
        }
    }
    for (int r = 0; r < a; ++r) {
      if (std::abs(dir[r]) < 1e-300) continue;
      const double g = -beta[active[r]] / dir[r];
      if (g > 1e-14 && g < gamma_max) {
        gamma_max = g;
        dropper = r;
        joiner = -1;
      }
    }

    for (int r = 0; r < a; ++r) beta[active[r]] += gamma_max * dir[r];
    residual -= gamma_max * fit_dir;
    corr -= gamma_max * corr_dir;
    lam -= gamma_max;

    if (dropper >= 0) {
      beta[active[dropper]] = 0.0;
      in_active[active[dropper]] = false;
      active.erase(active.begin() + dropper);
    }
    (void)joiner;
    if (lam <= lambda + 1e-14) break;
    if (step + 1 == max_steps) throw LarsFailure("lars_lasso: step cap exceeded");
  }

  // Certification pass: degenerate sign events off the one-at-a-time path
  // can leave a coefficient inconsistent with its correlation, so the path
  // point is polished to exact KKT on the equivalent quadratic form.
  QuadraticLassoProblem certify;
  certify.Q = x.transpose() * x;
  certify.b = x.transpose() * data.y;
  certify.weights = Vec::Constant(q, lambda);
  const double scale = std::max(1.0, certify.Q.diagonal().maxCoeff());
  try {
    return solve_quadratic_lasso(certify, 1e-10 * scale, LassoMethod::kCoordinateDescent, &beta).x;
  } catch (const std::runtime_error& e) {
    throw LarsFailure(std::string("lars_lasso: certification failed: ") + e.what());
  }
}

double lasso_objective(const QuadraticLassoProblem& problem, const Vec& x) {
  return x.dot(problem.Q * x) - 2.0 * problem.b.dot(x) +
         2.0 * problem.weights.cwiseProduct(x.cwiseAbs()).sum();
}

double lasso_kkt_residual(const QuadraticLassoProblem& problem, const Vec& x) {
  const Vec grad = problem.Q * x - problem.b;
  double worst = 0.0;
  for (int k = 0; k < problem.dim(); ++k) {
    const double w = problem.weights[k];
    const bool nonneg = !problem.signs.empty() && problem.signs[k] == SignConstraint::kNonNegative;
    double violation = 0.0;
    if (x[k] > 0.0)
      violation = std::abs(grad[k] + w);
    else if (x[k] < 0.0)
      violation = std::abs(grad[k] - w);
    else if (nonneg)
      violation = std::max(0.0, -(grad[k] + w));  // must not pay to move up
    else
      violation = std::max(0.0, std::abs(grad[k]) - w);
    worst = std::max(worst, violation);
  }
  return worst;
}

namespace {

// Primal active-set refinement: exact stationarity solves on the working
// set, feasible line steps when a sign would flip, and activation of the
// worst KKT violator. Breaks the coordinate-descent zigzag on correlated
// columns. Returns true when the KKT residual reached tol.
bool active_set_polish(const QuadraticLassoProblem& problem, Vec& x, Vec& grad, double tol) {
  const int d = problem.dim();
  std::vector<int> active;
  std::vector<double> sign;
  for (int k = 0; k < d; ++k)
    if (x[k] != 0.0) {
      active.push_back(k);
      sign.push_back(x[k] > 0.0 ? 1.0 : -1.0);
    }

  const int max_pivots = 8 * std::max(d, 4);
  for (int pivot = 0; pivot < max_pivots; ++pivot) {
    const int a = static_cast<int>(active.size());
    bool feasible = true;
    if (a > 0) {
      Mat qs(a, a);
      Vec bs(a);
      for (int r = 0; r < a; ++r) {
        bs[r] = problem.b[active[r]] - sign[r] * problem.weights[active[r]];
        for (int c = 0; c < a; ++c) qs(r, c) = problem.Q(active[r], active[c]);
      }
      // rank-tolerant minimum-norm solve: singular working sets appear when
      // zero-event directions enter, and any restricted minimizer will do
      Eigen::CompleteOrthogonalDecomposition<Mat> cod(qs);
      Vec z = cod.solve(bs);
      for (int refine = 0; refine < 2; ++refine) z += cod.solve(bs - qs * z);
      if (!z.allFinite() ||
          (qs * z - bs).cwiseAbs().maxCoeff() >
              1e-6 * std::max(1.0, bs.cwiseAbs().maxCoeff() + (qs * z).cwiseAbs().maxCoeff()))
        return false;  // inconsistent working set; leave it to coordinate descent

      // step from x_A toward z, stopping at the first sign flip
      double t = 1.0;
      int blocker = -1;
      for (int r = 0; r < a; ++r) {
        if (sign[r] * z[r] >= 0.0) continue;
        const double xa = x[active[r]];
        const double tr = xa / (xa - z[r]);
        if (tr < t) {
          t = tr;
          blocker = r;
        }
      }
      for (int r = 0; r < a; ++r) x[active[r]] += t * (z[r] - x[active[r]]);
      if (blocker >= 0) {
        x[active[blocker]] = 0.0;
        active.erase(active.begin() + blocker);
        sign.erase(sign.begin() + blocker);
        feasible = false;
      }
    }
    if (!feasible) continue;

    grad = problem.Q * x - problem.b;
    if (lasso_kkt_residual(problem, x) <= tol) return true;

    // activate the worst violator among the inactive coordinates
    int worst = -1;
    double worst_violation = tol;
    double enter_sign = 1.0;
    for (int k = 0; k < d; ++k) {
      if (x[k] != 0.0) continue;
      const double w = problem.weights[k];
      const bool nonneg = !problem.signs.empty() && problem.signs[k] == SignConstraint::kNonNegative;
      if (nonneg) {
        const double violation = -(grad[k] + w);
        if (violation > worst_violation) {
          worst_violation = violation;
          worst = k;
          enter_sign = 1.0;
        }
      } else {
        const double violation = std::abs(grad[k]) - w;
        if (violation > worst_violation) {
          worst_violation = violation;
          worst = k;
          enter_sign = grad[k] < 0.0 ? 1.0 : -1.0;
        }
      }
    }
    if (worst < 0) return false;  // violations only on already-active coordinates
    active.push_back(worst);
    sign.push_back(enter_sign);
  }
  return false;
}

// One pass of cyclic projected soft-thresholding; grad = Qx - b kept incrementally.
double cd_sweep(const QuadraticLassoProblem& problem, Vec& x, Vec& grad, double diag_floor) {
  double max_change = 0.0;
  const int d = problem.dim();
  for (int k = 0; k < d; ++k) {
    const double qkk = problem.Q(k, k);
    if (qkk <= diag_floor) continue;  // degenerate coordinate stays put
    const double r = qkk * x[k] - grad[k];  // b_k - sum_{l != k} Q_kl x_l
    const double w = problem.weights[k];
    double x_new;
    if (!problem.signs.empty() && problem.signs[k] == SignConstraint::kNonNegative)
      x_new = std::max(0.0, (r - w) / qkk);
    else {
      const double mag = std::abs(r) - w;
      x_new = mag > 0.0 ? (r >= 0.0 ? mag : -mag) / qkk : 0.0;
    }
    const double delta = x_new - x[k];
    if (delta != 0.0) {
      x[k] = x_new;
      grad += problem.Q.col(k) * delta;
      max_change = std::max(max_change, std::abs(delta));
    }
  }
  return max_change;
}

}  // namespace

LassoSolution solve_quadratic_lasso(const QuadraticLassoProblem& problem, double tol,
                                    LassoMethod method, const Vec* warm_start) {
  problem.validate();
  const int d = problem.dim();
  LassoSolution sol;
  sol.x = Vec::Zero(d);

  const double diag_scale = d > 0 ? std::max(problem.Q.diagonal().maxCoeff(), 0.0) : 0.0;
  const double diag_floor = kTinyDiagonal * std::max(diag_scale, 1e-300);

  if (warm_start && warm_start->size() == d) sol.x = *warm_start;

  const bool weights_positive = d == 0 || (problem.weights.array() > 0.0).all();
  if (method == LassoMethod::kLarsPolish && !weights_positive)
    throw std::invalid_argument("solve_quadratic_lasso: LARS route needs positive weights");
  const bool want_lars =
      method == LassoMethod::kLarsPolish || (method == LassoMethod::kAuto && weights_positive && !warm_start);
  if (want_lars && d > 0 && diag_scale > 0.0) {
    try {
      const PsdSqrt root = psd_sqrt(problem.Q);
      const Vec y_syn = root.inv_half * problem.b;
      // column scaling folds per-coordinate weights into a unit penalty
      const Vec inv_w = problem.weights.cwiseInverse();
      const Mat x_syn = root.half * inv_w.asDiagonal();
      const Vec u = lars_lasso(y_syn, x_syn, 1.0);
      sol.x = u.cwiseProduct(inv_w);
      sol.used_lars = true;
    } catch (const LarsFailure&) {
      if (method == LassoMethod::kLarsPolish) throw;
      sol.x.setZero();  // auto mode: fall back to a cold coordinate-descent start
    }
  }

  // enforce sign constraints before polishing
  if (!problem.signs.empty())
    for (int k = 0; k < d; ++k)
      if (problem.signs[k] == SignConstraint::kNonNegative && sol.x[k] < 0.0) sol.x[k] = 0.0;

  Vec grad = problem.Q * sol.x - problem.b;
  const double step_tol = tol / std::max(1.0, 10.0 * diag_scale);
  for (sol.sweeps = 0; sol.sweeps < kMaxSweeps; ++sol.sweeps) {
    const double change = cd_sweep(problem, sol.x, grad, diag_floor);
    if (change < step_tol || (sol.sweeps + 1) % 200 == 0) {
      grad = problem.Q * sol.x - problem.b;  // refresh to drop incremental drift
      if (lasso_kkt_residual(problem, sol.x) <= tol) break;
      if (active_set_polish(problem, sol.x, grad, tol)) break;
      grad = problem.Q * sol.x - problem.b;
    }
  }
  sol.kkt_residual = lasso_kkt_residual(problem, sol.x);
  if (sol.kkt_residual > tol)
    throw std::runtime_error("solve_quadratic_lasso: no convergence within sweep cap (KKT residual " +
                             std::to_string(sol.kkt_residual) + ")");
  sol.objective = lasso_objective(problem, sol.x);
  for (int k = 0; k < d; ++k)
    if (sol.x[k] != 0.0) sol.active.push_back(k);
  return sol;
}

namespace {

RowSolution solve_row_fixed_penalty(const SuffStats& stats, int i, double omega_i,
                                    double alpha_penalty, double tol) {
  const int n = stats.n();
  const double T = stats.window.length();
  if (stats.V[i] <= 0.0)
    throw std::invalid_argument("solve_row_problem: V_ii = 0 (degenerate baseline integral)");

  QuadraticLassoProblem problem;
  problem.Q = stats.Gamma / T;
  problem.weights = Vec::Constant(n, omega_i);
  problem.signs.assign(n, SignConstraint::kNonNegative);

  RowSolution row;
  row.c = Vec::Zero(n);
  row.alpha = 1.0;  // matches the documented alternation start
  auto joint_kkt = [&]() {
    problem.b = (stats.Acount.row(i).transpose() - row.alpha * stats.G.row(i).transpose()) / T;
    double kkt = lasso_kkt_residual(problem, row.c);
    const double grad_a =
        (row.alpha * stats.V[i] + row.c.dot(stats.G.row(i)) - stats.v[i]) / T + alpha_penalty;
    return std::max(kkt, row.alpha > 0.0 ? std::abs(grad_a) : std::max(0.0, -grad_a));
  };

  const int max_iterations = 1000;
  for (row.iterations = 1;; ++row.iterations) {
    problem.b = (stats.Acount.row(i).transpose() - row.alpha * stats.G.row(i).transpose()) / T;
    const LassoSolution ls = solve_quadratic_lasso(problem, 0.5 * tol, LassoMethod::kAuto,
                                                   row.iterations == 1 ? nullptr : &row.c);
    row.c = ls.x;
    row.alpha = std::max(
        0.0, (stats.v[i] - row.c.dot(stats.G.row(i)) - alpha_penalty * T) / stats.V[i]);

    row.kkt_residual = joint_kkt();
    if (row.kkt_residual <= tol) break;
    if (row.iterations >= max_iterations)
      throw std::runtime_error("solve_row_problem: alternation did not reach the KKT tolerance");
  }
  row.objective = ls_value(stats, row.c, row.alpha, i) / T +
                  2.0 * omega_i * row.c.lpNorm<1>() + 2.0 * alpha_penalty * row.alpha;
  return row;
}

}  // namespace

RowSolution solve_row_problem(const SuffStats& stats, int i, double omega_i,
                              double alpha_penalty, double tol, double row_l1_bound) {
  RowSolution row = solve_row_fixed_penalty(stats, i, omega_i, alpha_penalty, tol);
  if (!(row.c.lpNorm<1>() < row_l1_bound)) {
    // By duality the L1-ball constrained solution is a lasso solution at a
    // larger penalty; bisect on the extra weight until the row is feasible.
    double lo = omega_i, hi = std::max(1.0, 2.0 * omega_i);
    int doublings = 0;
    while (solve_row_fixed_penalty(stats, i, hi, alpha_penalty, tol).c.lpNorm<1>() >= row_l1_bound) {
      hi *= 2.0;
      if (++doublings > 60) throw std::runtime_error("solve_row_problem: cannot satisfy the L1 bound");
    }
    for (int iter = 0; iter < 60 && (hi - lo) > 1e-10 * hi; ++iter) {
      const double mid = 0.5 * (lo + hi);
      if (solve_row_fixed_penalty(stats, i, mid, alpha_penalty, tol).c.lpNorm<1>() >= row_l1_bound)
        lo = mid;
      else
        hi = mid;
    }
    row = solve_row_fixed_penalty(stats, i, hi, alpha_penalty, tol);
    row.l1_bound_hit = true;
    // objective reported against the requested penalty
    row.objective = ls_value(stats, row.c, row.alpha, i) / stats.window.length() +
                    2.0 * omega_i * row.c.lpNorm<1>() + 2.0 * alpha_penalty * row.alpha;
  }
  return row;
}

NodewiseResult nodewise_lasso(const Mat& sigma, int j, double sigma_j,
                              const std::vector<int>& unpenalized) {
  const int d = static_cast<int>(sigma.rows());
  if (sigma.cols() != d) throw std::invalid_argument("nodewise_lasso: matrix must be square");
  return nodewise_lasso_sq(sigma * sigma, j, sigma_j, unpenalized);
}

namespace {

using LdMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using LdVec = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

// The approximate-inverse columns can be very badly scaled when the outer
// fit sits near the box boundary, so the node-wise solve runs in extended
// precision: cyclic soft-thresholding plus exact working-set pivots, with
// free signs and zero weights on the unpenalized coordinates.
long double nodewise_kkt(const LdMat& Q, const LdVec& b, const LdVec& w, const LdVec& x) {
  const LdVec grad = Q * x - b;
  long double worst = 0;
  for (int k = 0; k < x.size(); ++k) {
    long double violation;
    if (x[k] != 0.0L)
      violation = std::abs(grad[k] + (x[k] > 0.0L ? w[k] : -w[k]));
    else
      violation = std::max<long double>(0.0L, std::abs(grad[k]) - w[k]);
    worst = std::max(worst, violation);
  }
  return worst;
}

// Primal active-set pivoting toward the certificate criterion: every
// coordinate's violation, mapped back through its column scale, must fit
// inside the given budget (a slice of tau, recomputed as x moves).
bool nodewise_pivot_polish(const LdMat& Q, const LdVec& b, const LdVec& w, const LdVec& scale,
                           const std::function<long double(const LdVec&)>& budget_of, LdVec& x) {
  const int d = static_cast<int>(x.size());
  std::vector<int> active;
  std::vector<long double> sign;
  for (int k = 0; k < d; ++k)
    if (x[k] != 0.0L) {
      active.push_back(k);
      sign.push_back(x[k] > 0.0L ? 1.0L : -1.0L);
    }
  for (int pivot = 0; pivot < 16 * std::max(d, 4); ++pivot) {
    const int a = static_cast<int>(active.size());
    bool feasible = true;
    if (a > 0) {
      LdMat qs(a, a);
      LdVec bs(a);
      for (int r = 0; r < a; ++r) {
        bs[r] = b[active[r]] - sign[r] * w[active[r]];
        for (int c = 0; c < a; ++c) qs(r, c) = Q(active[r], active[c]);
      }
      Eigen::CompleteOrthogonalDecomposition<LdMat> cod(qs);
      LdVec z = cod.solve(bs);
      for (int refine = 0; refine < 4; ++refine) z += cod.solve(bs - qs * z);
      if (!z.allFinite()) return false;
      long double t = 1.0L;
      int blocker = -1;
      for (int r = 0; r < a; ++r) {
        if (sign[r] * z[r] >= 0.0L) continue;
        const long double tr = x[active[r]] / (x[active[r]] - z[r]);
        if (tr < t) {
          t = tr;
          blocker = r;
        }
      }
      for (int r = 0; r < a; ++r) x[active[r]] += t * (z[r] - x[active[r]]);
      if (blocker >= 0) {
        x[active[blocker]] = 0.0L;
        active.erase(active.begin() + blocker);
        sign.erase(sign.begin() + blocker);
        feasible = false;
      }
    }
    if (!feasible) continue;

    const LdVec grad = Q * x - b;
    const long double budget = budget_of(x);
    int worst = -1;
    long double worst_violation = budget;
    long double enter_sign = 1.0L;
    long double worst_any = 0;
    for (int k = 0; k < d; ++k) {
      long double violation;
      if (x[k] != 0.0L)
        violation = std::abs(grad[k] + (x[k] > 0.0L ? w[k] : -w[k])) * scale[k];
      else {
        violation = std::max<long double>(0.0L, std::abs(grad[k]) - w[k]) * scale[k];
        if (violation > worst_violation) {
          worst_violation = violation;
          worst = k;
          enter_sign = grad[k] < 0.0L ? 1.0L : -1.0L;
        }
      }
      worst_any = std::max(worst_any, violation);
    }
    if (worst_any <= budget) return true;
    if (worst < 0) return false;  // residual violation sits on the working set
    active.push_back(worst);
    sign.push_back(enter_sign);
    x[worst] = 0.0L;
  }
  return false;
}

}  // namespace

NodewiseResult nodewise_lasso_sq(const Mat& sigma2, int j, double sigma_j,
                                 const std::vector<int>& unpenalized) {
  const int d = static_cast<int>(sigma2.rows());
  if (j < 0 || j >= d) throw std::invalid_argument("nodewise_lasso: bad column index");
  if (!(sigma_j > 0.0)) throw std::invalid_argument("nodewise_lasso: sigma_j must be positive");

  // ||Sigma_{.,j} - Sigma_{.,-j} v||^2 expands through Sigma^2 only. The
  // design is column-equilibrated (v_k = x_k / s_k with s_k the column
  // norm), which turns the scale spread of degenerate fits into a plain
  // weighted lasso with unit diagonal.
  auto reduced = [&](int k) { return k < j ? k : k - 1; };
  LdVec scale(d - 1);
  for (int k = 0; k < d; ++k)
    if (k != j) scale[reduced(k)] = std::sqrt(std::max(sigma2(k, k), 0.0));
  const long double scale_max = d > 1 ? scale.maxCoeff() : 1.0L;
  std::vector<bool> dead(d - 1, false);
  for (int k = 0; k < d - 1; ++k)
    if (!(scale[k] > 1e-14L * std::max<long double>(scale_max, 1e-300L))) {
      dead[k] = true;  // numerically zero column: the coefficient stays 0
      scale[k] = 1.0L;
    }

  LdMat Q(d - 1, d - 1);
  LdVec b(d - 1);
  LdVec w = LdVec::Constant(d - 1, sigma_j);
  for (int k = 0; k < d; ++k) {
    if (k == j) continue;
    const int rk = reduced(k);
    b[rk] = sigma2(k, j) / scale[rk];
    for (int l = 0; l < d; ++l) {
      if (l == j) continue;
      Q(rk, reduced(l)) = sigma2(k, l) / (scale[rk] * scale[reduced(l)]);
    }
  }
  for (int k = 0; k < d - 1; ++k) w[k] = sigma_j / scale[k];
  for (int k : unpenalized) {
    if (k == j) continue;
    if (k < 0 || k >= d) throw std::invalid_argument("nodewise_lasso: bad unpenalized index");
    w[reduced(k)] = 0.0L;
  }
  for (int k = 0; k < d - 1; ++k)
    if (dead[k]) Q(k, k) = 0.0L;  // keep the dead coordinate un-activatable

  // The Eq-style certificate compares per-coordinate violations, mapped
  // back to the original scale, against a slice of tau. tau is known only
  // after solving, so the scaled tolerance tightens adaptively down to the
  // extended-precision floor.
  auto tau_of = [&](const LdVec& xs) {
    long double cross = 0;
    for (int k = 0; k < d; ++k)
      if (k != j)
        cross += static_cast<long double>(sigma2(j, k)) * (xs[reduced(k)] / scale[reduced(k)]);
    return static_cast<long double>(sigma2(j, j)) - cross;
  };
  auto worst_original_gap = [&](const LdVec& xs) {
    const LdVec g = Q * xs - b;
    long double worst = 0;
    for (int k = 0; k < d - 1; ++k) {
      long double viol;
      if (xs[k] != 0.0L)
        viol = std::abs(g[k] + (xs[k] > 0.0L ? w[k] : -w[k]));
      else
        viol = std::max<long double>(0.0L, std::abs(g[k]) - w[k]);
      worst = std::max(worst, viol * scale[k]);
    }
    return worst;
  };

  auto budget_of = [&](const LdVec& xs) {
    return 1e-9L * std::max<long double>(std::abs(tau_of(xs)), 1e-30L);
  };

  LdVec x = LdVec::Zero(d - 1);
  LdVec grad = -b;
  bool certified = false;
  int stagnant = 0;
  long double best_gap = std::numeric_limits<long double>::infinity();
  for (int sweep = 0; sweep < 100000 && !certified; ++sweep) {
    long double change = 0;
    for (int k = 0; k < d - 1; ++k) {
      const long double qkk = Q(k, k);
      if (qkk <= 1e-14L) continue;
      const long double r = qkk * x[k] - grad[k];
      const long double mag = std::abs(r) - w[k];
      const long double next = mag > 0.0L ? (r >= 0.0L ? mag : -mag) / qkk : 0.0L;
      const long double delta = next - x[k];
      if (delta != 0.0L) {
        x[k] = next;
        grad += Q.col(k) * delta;
        change = std::max(change, std::abs(delta));
      }
    }
    // unpenalized coordinates can drift along near-null valleys with
    // steadily large per-sweep change, so the exact pivot polish runs
    // periodically rather than only on stalls
    if (change < 1e-16L || (sweep + 1) % 100 == 0) {
      if (nodewise_pivot_polish(Q, b, w, scale, budget_of, x)) {
        certified = true;
      } else {
        const long double gap = worst_original_gap(x);
        if (gap >= 0.5L * best_gap && ++stagnant >= 3)
          break;  // precision floor: surface the best achievable point
        best_gap = std::min(best_gap, gap);
      }
      grad = Q * x - b;
    }
  }
  if (nodewise_kkt(Q, b, w, x) > 1e-10L)
    throw std::runtime_error("nodewise_lasso: no convergence to the KKT tolerance");

  NodewiseResult out;
  out.v = Vec(d - 1);
  for (int k = 0; k < d - 1; ++k)
    out.v[k] = dead[k] ? 0.0 : static_cast<double>(x[k] / scale[k]);
  out.kkt_residual = static_cast<double>(nodewise_kkt(Q, b, w, x));
  const long double tau = tau_of(x);
  out.tau = static_cast<double>(tau);
  // certificate entries off the diagonal are the scaled residuals over tau;
  // the diagonal entry cancels exactly by the definition of tau
  const LdVec g = Q * x - b;
  long double worst = 0;
  for (int k = 0; k < d - 1; ++k) worst = std::max(worst, std::abs(g[k]) * scale[k]);
  out.realized_gap = static_cast<double>(worst / std::max<long double>(std::abs(tau), 1e-300L));
  return out;
}

}  // namespace hawkesnet
