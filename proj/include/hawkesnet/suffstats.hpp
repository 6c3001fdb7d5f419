#pragma once

// Exact integrals of the squared-intensity criterion. All quantities are
// computed in closed form on the mesh obtained by merging covariate segment
// boundaries with event times and kernel-truncation expiries: on each mesh
// cell the baseline is constant and every excitation path is a single
// exponential bundle, so each cell contributes an elementary integral.
//
// For a window [t0, t1], events at or before t0 enter as carried history
// (the model integral starts at -infinity), which makes stats additive
// across a split [0,S] + [S,T].

#include <optional>
#include <vector>

#include "hawkesnet/model.hpp"

namespace hawkesnet {

struct Theta {
  Vec beta;
  double gamma = 1.0;
  int p() const { return static_cast<int>(beta.size()); }
};

struct Window {
  double t0 = 0.0;
  double t1 = 0.0;
  double length() const { return t1 - t0; }
};

/// w_j(t) = sum over events s of j with 0 < t - s <= A of exp(-gamma (t-s)),
/// stored as the pre-jump value at each event of j.
struct ExcitationPath {
  std::vector<double> times;
  std::vector<double> pre_jump;  // w(t_k-) at each event
  double gamma = 0.0;
  double horizon = 0.0;

  /// Exact left limit w(t-), truncation-aware.
  double value_before(double t) const;
};

ExcitationPath excitation_path(const std::vector<double>& events_j, double gamma, double horizon_A);

struct SuffStats {
  Theta theta;
  Window window;
  double horizon_A = 0.0;

  Vec V;             // n, integral of nu0_i^2
  Mat Gamma;         // n x n, integral of w_j w_k (symmetric PSD)
  Mat G;             // n x n, integral of nu0_i w_j
  Mat Acount;        // n x n, sum over events of i of w_j(t-)
  Vec v;             // n, sum over events of i of nu0_i(t)

  Vec baseline_int;  // n, integral of nu0_i (compensator helper)
  Vec excite_int;    // n, integral of w_j
  Vec event_count;   // n, N_i(window)

  int n() const { return static_cast<int>(V.size()); }
};

/// Derivative families against beta and gamma, for score/Hessian assembly.
/// Convention: wd_j = d/dgamma w_j (non-positive), wdd_j = d^2/dgamma^2 w_j.
struct ExtendedStats {
  SuffStats base;

  Mat V1;                  // n x p, integral of x_q nu0^2
  std::vector<Mat> G1;     // p mats n x n, integral of x_q nu0_i w_j
  Mat Gd;                  // n x n, integral of nu0_i wd_j
  std::vector<Mat> G1d;    // p mats n x n, integral of x_q nu0_i wd_j
  Mat Gdd;                 // n x n, integral of nu0_i wdd_j
  Mat Gamma_d;             // n x n, integral of w_j wd_k (not symmetric)
  Mat Gamma_dd;            // n x n, integral of wd_j wd_k
  Mat Gamma_e;             // n x n, integral of w_j wdd_k
  Mat Ad;                  // n x n, sum over events of i of wd_j(t-)
  Mat Add;                 // n x n, sum over events of i of wdd_j(t-)
  Mat v1;                  // n x p, sum over events of i of x_q nu0
  std::vector<Mat> V2;     // n mats p x p, integral of x x' nu0^2
  std::vector<Mat> G2;     // n*n mats p x p (index i*n+j), integral of x x' nu0_i w_j
  std::vector<Mat> v2;     // n mats p x p, event sums of x x' nu0
};

/// Precomputes the theta-independent mesh once; stats at many theta values
/// are then a single pass each. Safe to share across threads after
/// construction.
class StatsBuilder {
 public:
  StatsBuilder(const EventLog& events, const CovariateField& covariates,
               Window window, double horizon_A);

  SuffStats stats(const Theta& theta) const;
  ExtendedStats extended(const Theta& theta) const;

  int n() const { return n_; }
  int p() const { return p_; }
  const Window& window() const { return window_; }
  double horizon() const { return horizon_A_; }

 private:
  struct Cell {
    double t0, t1;
    int seg;                      // covariate segment for [t0, t1)
    std::vector<int> events;      // nodes with an event at t1
    std::vector<int> event_segs;  // covariate segment at the event time
    std::vector<int> expiries;    // nodes with an excitation expiry at t1
  };

  // evaluates exp(x' beta) per (segment, node) for segments touching the window
  Mat baseline_table(const Vec& beta) const;

  int n_ = 0, p_ = 0;
  Window window_;
  double horizon_A_ = 0.0;
  std::vector<Cell> cells_;
  std::vector<std::pair<int, double>> history_;  // (node, age at t0) of carried events
  std::vector<Mat> segment_x_;                   // covariate rows per segment (n x p)
};

/// One-shot convenience wrappers around StatsBuilder.
SuffStats compute_stats(const EventLog& events, const CovariateField& covariates,
                        const Theta& theta, Window window, double horizon_A);
ExtendedStats compute_extended_stats(const EventLog& events, const CovariateField& covariates,
                                     const Theta& theta, Window window, double horizon_A);

/// LS_i(c, a) = a^2 V_ii + c Gamma c' + 2 a c G_i' - 2 a v_i - 2 c A_i'.
double ls_value(const SuffStats& stats, const Eigen::Ref<const Vec>& c, double a, int i);

/// Sum of ls_value over rows, via the trace identity.
double ls_total(const SuffStats& stats, const Mat& C, const Vec& alpha);

struct PsdSqrt {
  Mat half;
  Mat inv_half;  // pseudo-inverse square root: small eigenvalues zeroed
  int rank = 0;
};

/// Symmetric eigendecomposition square root; eigenvalues below
/// rank_tol * lambda_max are treated as zero.
PsdSqrt psd_sqrt(const Mat& gamma, double rank_tol = 1e-12);

/// Cache key for persisted stats: (data digest, theta, window).
std::string stats_cache_key(const std::string& data_digest, const Theta& theta, Window window);
std::string suffstats_to_json(const SuffStats& stats);
SuffStats suffstats_from_json(const std::string& text);

}  // namespace hawkesnet
