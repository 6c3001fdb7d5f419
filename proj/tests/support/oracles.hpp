#pragma once

// Independent verification routes used by the tests. Everything here
// recomputes quantities from raw definitions: adaptive quadrature over the
// time axis, direct event sums, and reference solvers that share no code
// with the library implementations they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hawkesnet/model.hpp"
#include "hawkesnet/suffstats.hpp"

namespace oracle {

using hawkesnet::CovariateField;
using hawkesnet::EventLog;
using hawkesnet::Mat;
using hawkesnet::Theta;
using hawkesnet::Vec;
using hawkesnet::Window;

// ---------- adaptive quadrature ----------

inline double simpson(const std::function<double(double)>& f, double a, double m, double b,
                      double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive_step(const std::function<double(double)>& f, double a, double b, double fa,
                            double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson(f, a, lm, m, fa, flm, fm);
  const double right = simpson(f, m, rm, b, fm, frm, fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         adaptive_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-11) {
  if (!(b > a)) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  return adaptive_step(f, a, b, fa, fm, fb, simpson(f, a, m, b, fa, fm, fb), tol, 24);
}

// Integrates across the given breakpoints so the integrand is smooth on
// every subinterval handed to the adaptive rule.
inline double integrate_piecewise(const std::function<double(double)>& f, double a, double b,
                                  std::vector<double> breaks, double tol = 1e-11) {
  breaks.push_back(a);
  breaks.push_back(b);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double lo = std::max(a, breaks[k]);
    const double hi = std::min(b, breaks[k + 1]);
    if (hi > lo) total += integrate(f, lo, hi, tol);
  }
  return total;
}

// ---------- raw-definition evaluations ----------

/// w_j(t-) by direct truncated summation over the event list.
inline double excitation_at(const std::vector<double>& events_j, double gamma, double A, double t) {
  double w = 0.0;
  for (double s : events_j) {
    if (s >= t) break;
    const double u = t - s;
    if (u <= A) w += std::exp(-gamma * u);
  }
  return w;
}

inline double baseline_at(const CovariateField& cov, const Vec& beta, int node, double t) {
  if (beta.size() == 0) return 1.0;
  return std::exp(cov.value_at(node, t).dot(beta));
}

struct RawStats {
  Vec V;
  Mat Gamma, G, A;
  Vec v;
};

/// V, Gamma, G by adaptive quadrature on the raw integrands; A, v by direct
/// event sums. History before the window start is included, mirroring the
/// model's integral from -infinity.
inline RawStats raw_stats(const EventLog& events, const CovariateField& cov, const Theta& theta,
                          Window window, double horizon_A, double tol = 1e-12) {
  const int n = events.n();
  std::vector<double> breaks(cov.boundaries);
  for (int j = 0; j < n; ++j)
    for (double s : events.times[j]) {
      breaks.push_back(s);
      breaks.push_back(s + horizon_A);
    }

  RawStats out;
  out.V = Vec::Zero(n);
  out.Gamma = Mat::Zero(n, n);
  out.G = Mat::Zero(n, n);
  out.A = Mat::Zero(n, n);
  out.v = Vec::Zero(n);

  for (int i = 0; i < n; ++i) {
    out.V[i] = integrate_piecewise(
        [&](double t) {
          const double nu = baseline_at(cov, theta.beta, i, t);
          return nu * nu;
        },
        window.t0, window.t1, breaks, tol);
    for (int j = 0; j < n; ++j)
      out.G(i, j) = integrate_piecewise(
          [&](double t) {
            return baseline_at(cov, theta.beta, i, t) *
                   excitation_at(events.times[j], theta.gamma, horizon_A, t);
          },
          window.t0, window.t1, breaks, tol);
  }
  for (int j = 0; j < n; ++j)
    for (int k = j; k < n; ++k) {
      const double val = integrate_piecewise(
          [&](double t) {
            return excitation_at(events.times[j], theta.gamma, horizon_A, t) *
                   excitation_at(events.times[k], theta.gamma, horizon_A, t);
          },
          window.t0, window.t1, breaks, tol);
      out.Gamma(j, k) = val;
      out.Gamma(k, j) = val;
    }
  for (int i = 0; i < n; ++i)
    for (double t : events.times[i]) {
      if (t <= window.t0 || t > window.t1) continue;
      out.v[i] += baseline_at(cov, theta.beta, i, t);
      for (int j = 0; j < n; ++j)
        out.A(i, j) += excitation_at(events.times[j], theta.gamma, horizon_A, t);
    }
  return out;
}

/// Definitional LS_i: quadrature of Psi^2 minus twice the event sum of Psi.
inline double raw_ls(const EventLog& events, const CovariateField& cov, const Theta& theta,
                     Window window, double horizon_A, const Vec& c, double a, int i) {
  const int n = events.n();
  std::vector<double> breaks(cov.boundaries);
  for (int j = 0; j < n; ++j)
    for (double s : events.times[j]) {
      breaks.push_back(s);
      breaks.push_back(s + horizon_A);
    }
  auto psi = [&](double t) {
    double val = a * baseline_at(cov, theta.beta, i, t);
    for (int j = 0; j < n; ++j)
      val += c[j] * excitation_at(events.times[j], theta.gamma, horizon_A, t);
    return val;
  };
  const double quad = integrate_piecewise([&](double t) { return psi(t) * psi(t); },
                                          window.t0, window.t1, breaks);
  double event_sum = 0.0;
  for (double t : events.times[i])
    if (t > window.t0 && t <= window.t1) event_sum += psi(t);
  return quad - 2.0 * event_sum;
}

// ---------- reference solvers ----------

/// Cyclic coordinate descent for min ||y - X c||^2 + 2 lambda ||c||_1,
/// written against the data form (residual updates), independent of the
/// library's quadratic-form solver.
inline Vec lasso_cd_reference(const Vec& y, const Mat& x, double lambda, int sweeps = 200000,
                              double tol = 1e-13) {
  const int q = static_cast<int>(x.cols());
  Vec c = Vec::Zero(q);
  Vec residual = y;
  Vec col_sq(q);
  for (int k = 0; k < q; ++k) col_sq[k] = x.col(k).squaredNorm();
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double change = 0.0;
    for (int k = 0; k < q; ++k) {
      if (col_sq[k] <= 0.0) continue;
      const double rho = x.col(k).dot(residual) + col_sq[k] * c[k];
      double next = 0.0;
      if (rho > lambda)
        next = (rho - lambda) / col_sq[k];
      else if (rho < -lambda)
        next = (rho + lambda) / col_sq[k];
      const double delta = next - c[k];
      if (delta != 0.0) {
        residual -= x.col(k) * delta;
        c[k] = next;
        change = std::max(change, std::abs(delta));
      }
    }
    if (change < tol) break;
  }
  return c;
}

inline double lasso_data_objective(const Vec& y, const Mat& x, double lambda, const Vec& c) {
  return (y - x * c).squaredNorm() + 2.0 * lambda * c.lpNorm<1>();
}

/// Exact oracle for min x'Qx - 2b'x + 2 sum w_k|x_k| with optional
/// non-negativity, by enumerating every sign pattern (0 / + / -) and
/// solving the stationarity system on the support. Practical for d <= ~8.
inline Vec lasso_enumeration(const Mat& Q, const Vec& b, const Vec& w,
                             const std::vector<bool>& nonneg) {
  const int d = static_cast<int>(b.size());
  if (d > 10) throw std::invalid_argument("lasso_enumeration: dimension too large");
  Vec best = Vec::Zero(d);
  double best_obj = 0.0;  // x = 0
  std::size_t patterns = 1;
  for (int k = 0; k < d; ++k) patterns *= 3;
  for (std::size_t code = 1; code < patterns; ++code) {
    std::size_t rem = code;
    std::vector<int> idx;
    std::vector<double> sign;
    bool valid = true;
    for (int k = 0; k < d; ++k) {
      const int state = static_cast<int>(rem % 3);
      rem /= 3;
      if (state == 0) continue;
      if (state == 2 && nonneg[k]) {
        valid = false;
        break;
      }
      idx.push_back(k);
      sign.push_back(state == 1 ? 1.0 : -1.0);
    }
    if (!valid || idx.empty()) continue;
    Mat qs(idx.size(), idx.size());
    Vec bs(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      bs[r] = b[idx[r]] - sign[r] * w[idx[r]];
      for (std::size_t c2 = 0; c2 < idx.size(); ++c2) qs(r, c2) = Q(idx[r], idx[c2]);
    }
    const Vec xs = qs.fullPivLu().solve(bs);
    if (!xs.allFinite()) continue;
    bool consistent = true;
    for (std::size_t r = 0; r < idx.size(); ++r)
      if (xs[r] * sign[r] < 0.0) consistent = false;
    if (!consistent) continue;
    Vec x = Vec::Zero(d);
    for (std::size_t r = 0; r < idx.size(); ++r) x[idx[r]] = xs[r];
    const double obj =
        x.dot(Q * x) - 2.0 * b.dot(x) + 2.0 * w.cwiseProduct(x.cwiseAbs()).sum();
    if (obj < best_obj - 1e-14) {
      best_obj = obj;
      best = x;
    }
  }
  return best;
}

/// Non-negative special case of the enumeration oracle.
inline Vec nonneg_qp_enumeration(const Mat& Q, const Vec& b, const Vec& w) {
  return lasso_enumeration(Q, b, w, std::vector<bool>(b.size(), true));
}

}  // namespace oracle
