#include "hawkesnet/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <nlohmann/json.hpp>

#include "hawkesnet/rng.hpp"
#include "hawkesnet/threadpool.hpp"

namespace hawkesnet {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

ThetaBox ThetaBox::defaults(int p) {
  ThetaBox box;
  box.beta_lo = Vec::Constant(p, -10.0);
  box.beta_hi = Vec::Constant(p, 10.0);
  box.gamma_lo = 0.1;
  box.gamma_hi = 5.0;
  return box;
}

Theta ThetaBox::clip(const Theta& theta) const {
  Theta out = theta;
  for (int q = 0; q < p(); ++q) out.beta[q] = std::clamp(theta.beta[q], beta_lo[q], beta_hi[q]);
  out.gamma = std::clamp(theta.gamma, gamma_lo, gamma_hi);
  return out;
}

bool ThetaBox::contains(const Theta& theta) const {
  if (theta.p() != p()) return false;
  for (int q = 0; q < p(); ++q)
    if (theta.beta[q] < beta_lo[q] || theta.beta[q] > beta_hi[q]) return false;
  return theta.gamma >= gamma_lo && theta.gamma <= gamma_hi;
}

RowsFit fit_rows(const SuffStats& stats, const Vec& omega, double tol,
                 double stability_margin, double alpha_penalty) {
  const int n = stats.n();
  if (omega.size() != n) throw std::invalid_argument("fit_rows: omega size mismatch");
  const double mass = kernel_mass(KernelSpec(stats.theta.gamma, stats.horizon_A));
  const double l1_bound = (1.0 - stability_margin) / mass;

  RowsFit fit;
  fit.C = Mat::Zero(n, n);
  fit.alpha = Vec::Zero(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const RowSolution row = solve_row_problem(stats, i, omega[i], alpha_penalty, tol, l1_bound);
    fit.C.row(i) = row.c.transpose();
    fit.alpha[i] = row.alpha;
    fit.kkt_max = std::max(fit.kkt_max, row.kkt_residual);
    fit.l1_bound_hit = fit.l1_bound_hit || row.l1_bound_hit;
    total += row.objective;
  }
  fit.criterion = total / n;
  return fit;
}

double profile_criterion(const StatsBuilder& builder, const Theta& theta, const Vec& omega,
                         double tol_inner, double stability_margin) {
  const SuffStats stats = builder.stats(theta);
  return fit_rows(stats, omega, tol_inner, stability_margin).criterion;
}

namespace {

// Nelder-Mead with box projection; tolerance on both the simplex diameter
// and the criterion spread. The criterion is not convex in theta, hence the
// random restarts driving this.
struct SimplexResult {
  Vec x;
  double f = kInf;
  int evals = 0;
};

SimplexResult nelder_mead(const std::function<double(const Vec&)>& f, const Vec& x0,
                          const Vec& lo, const Vec& hi, double tol, int max_evals) {
  const int d = static_cast<int>(x0.size());
  auto clip = [&](Vec x) {
    for (int k = 0; k < d; ++k) x[k] = std::clamp(x[k], lo[k], hi[k]);
    return x;
  };

  std::vector<Vec> simplex;
  std::vector<double> fx;
  int evals = 0;
  auto eval = [&](const Vec& x) {
    ++evals;
    return f(x);
  };

  simplex.push_back(clip(x0));
  fx.push_back(eval(simplex[0]));
  for (int k = 0; k < d; ++k) {
    Vec x = simplex[0];
    const double step = 0.05 * (hi[k] - lo[k]);
    x[k] += (x[k] + step <= hi[k]) ? step : -step;
    simplex.push_back(clip(x));
    fx.push_back(eval(simplex.back()));
  }

  auto order = [&]() {
    std::vector<int> idx(d + 1);
    for (int k = 0; k <= d; ++k) idx[k] = k;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fx[a] < fx[b]; });
    std::vector<Vec> s2;
    std::vector<double> f2;
    for (int k : idx) {
      s2.push_back(simplex[k]);
      f2.push_back(fx[k]);
    }
    simplex.swap(s2);
    fx.swap(f2);
  };

  while (evals < max_evals) {
    order();
    double diameter = 0.0;
    for (int k = 1; k <= d; ++k)
      diameter = std::max(diameter, (simplex[k] - simplex[0]).cwiseAbs().maxCoeff());
    if (diameter < tol && fx[d] - fx[0] < tol * (1.0 + std::abs(fx[0]))) break;

    Vec centroid = Vec::Zero(d);
    for (int k = 0; k < d; ++k) centroid += simplex[k];
    centroid /= d;

    const Vec reflected = clip(centroid + (centroid - simplex[d]));
    const double fr = eval(reflected);
    if (fr < fx[0]) {
      const Vec expanded = clip(centroid + 2.0 * (centroid - simplex[d]));
      const double fe = eval(expanded);
      if (fe < fr) {
        simplex[d] = expanded;
        fx[d] = fe;
      } else {
        simplex[d] = reflected;
        fx[d] = fr;
      }
    } else if (fr < fx[d - 1]) {
      simplex[d] = reflected;
      fx[d] = fr;
    } else {
      const Vec contracted = clip(centroid + 0.5 * (simplex[d] - centroid));
      const double fc = eval(contracted);
      if (fc < fx[d]) {
        simplex[d] = contracted;
        fx[d] = fc;
      } else {
        for (int k = 1; k <= d; ++k) {
          simplex[k] = clip(simplex[0] + 0.5 * (simplex[k] - simplex[0]));
          fx[k] = eval(simplex[k]);
        }
      }
    }
  }
  order();
  return {simplex[0], fx[0], evals};
}

Vec pack_theta(const Theta& theta) {
  Vec x(theta.p() + 1);
  x.head(theta.p()) = theta.beta;
  x[theta.p()] = theta.gamma;
  return x;
}

Theta unpack_theta(const Vec& x) {
  Theta theta;
  theta.beta = x.head(x.size() - 1);
  theta.gamma = x[x.size() - 1];
  return theta;
}

}  // namespace

StageOneResult stage1_fit(const EventLog& events, const CovariateField& covariates,
                          const Vec& omega, const ThetaBox& box, const FitOptions& opts,
                          std::optional<Window> window_opt) {
  const Window window = window_opt.value_or(Window{0.0, events.horizon});
  const double A = opts.resolved_horizon(box);
  const StatsBuilder builder(events, covariates, window, A);
  const int p = box.p();

  Vec lo(p + 1), hi(p + 1);
  lo.head(p) = box.beta_lo;
  hi.head(p) = box.beta_hi;
  lo[p] = box.gamma_lo;
  hi[p] = box.gamma_hi;

  auto objective = [&](const Vec& x) {
    return profile_criterion(builder, unpack_theta(x), omega, opts.tol1, opts.stability_margin);
  };

  const int K = std::max(1, opts.restarts);
  std::vector<RestartTrace> traces(K);
  parallel_for(K, opts.threads, [&](std::size_t k) {
    RngStream rng = RngStream::substream(opts.seed, 7000 + k);
    Vec start(p + 1);
    for (int q = 0; q <= p; ++q) start[q] = rng.uniform(lo[q], hi[q]);
    const SimplexResult res = nelder_mead(objective, start, lo, hi, opts.tol2, opts.max_evals);
    traces[k] = {unpack_theta(start), unpack_theta(res.x), res.f, res.evals};
  });

  int best = 0;
  for (int k = 1; k < K; ++k)
    if (traces[k].criterion < traces[best].criterion) best = k;
  if (!std::isfinite(traces[best].criterion))
    throw std::runtime_error("stage1_fit: no restart produced a finite criterion");

  const SimplexResult refined = nelder_mead(objective, pack_theta(traces[best].end), lo, hi,
                                            opts.tol3, 2 * opts.max_evals);

  StageOneResult out;
  out.theta = unpack_theta(refined.x);
  const SuffStats stats = builder.stats(out.theta);
  const RowsFit rows = fit_rows(stats, omega, opts.kkt_tol, opts.stability_margin);
  out.C = rows.C;
  out.alpha = rows.alpha;
  out.criterion = rows.criterion;
  out.kkt_max = rows.kkt_max;
  out.l1_bound_hit = rows.l1_bound_hit;
  out.restarts = std::move(traces);
  return out;
}

StageOneResult stage1_fixed_theta(const EventLog& events, const CovariateField& covariates,
                                  const Theta& theta, const Vec& omega, const FitOptions& opts,
                                  std::optional<Window> window_opt) {
  const Window window = window_opt.value_or(Window{0.0, events.horizon});
  const double A =
      opts.horizon_A > 0.0 ? opts.horizon_A : KernelSpec::default_horizon(theta.gamma);
  const StatsBuilder builder(events, covariates, window, A);
  const SuffStats stats = builder.stats(theta);
  const RowsFit rows = fit_rows(stats, omega, opts.kkt_tol, opts.stability_margin);

  StageOneResult out;
  out.theta = theta;
  out.theta_fixed = true;
  out.C = rows.C;
  out.alpha = rows.alpha;
  out.criterion = rows.criterion;
  out.kkt_max = rows.kkt_max;
  out.l1_bound_hit = rows.l1_bound_hit;
  return out;
}

int stack_dim(int n, int p) { return p + 1 + n + n * n; }

namespace {

// Index helpers for the (beta, gamma, alpha, C row-major) stack.
struct StackIndex {
  int n, p;
  int beta(int q) const { return q; }
  int gamma() const { return p; }
  int alpha(int k) const { return p + 1 + k; }
  int c(int x, int y) const { return p + 1 + n + x * n + y; }
};

Vec assemble_score(const ExtendedStats& ext, const HawkesParams& params) {
  const int n = ext.base.n();
  const int p = ext.base.theta.p();
  const StackIndex ix{n, p};
  const double norm = 2.0 / (n * ext.base.window.length());
  const Mat& C = params.C;
  Vec score = Vec::Zero(stack_dim(n, p));

  for (int q = 0; q < p; ++q) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      acc += params.alpha[i] * (params.alpha[i] * ext.V1(i, q) + C.row(i).dot(ext.G1[q].row(i)) -
                                ext.v1(i, q));
    score[ix.beta(q)] = norm * acc;
  }
  {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += params.alpha[i] * C.row(i).dot(ext.Gd.row(i));
      acc += C.row(i) * ext.Gamma_d * C.row(i).transpose();
      acc -= C.row(i).dot(ext.Ad.row(i));
    }
    score[ix.gamma()] = norm * acc;
  }
  for (int k = 0; k < n; ++k)
    score[ix.alpha(k)] = norm * (params.alpha[k] * ext.base.V[k] +
                                 C.row(k).dot(ext.base.G.row(k)) - ext.base.v[k]);
  const Mat CG = C * ext.base.Gamma;
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      score[ix.c(x, y)] = norm * (params.alpha[x] * ext.base.G(x, y) + CG(x, y) -
                                  ext.base.Acount(x, y));
  return score;
}

Mat assemble_sigma(const ExtendedStats& ext, const HawkesParams& params) {
  const int n = ext.base.n();
  const int p = ext.base.theta.p();
  const StackIndex ix{n, p};
  const double norm = 2.0 / (n * ext.base.window.length());
  const Mat& C = params.C;
  const Vec& alpha = params.alpha;
  Mat sigma = Mat::Zero(stack_dim(n, p), stack_dim(n, p));

  // beta-beta
  for (int i = 0; i < n; ++i) {
    Mat block = 2.0 * alpha[i] * alpha[i] * ext.V2[i] - alpha[i] * ext.v2[i];
    for (int j = 0; j < n; ++j)
      block += alpha[i] * C(i, j) * ext.G2[static_cast<std::size_t>(i) * n + j];
    for (int q1 = 0; q1 < p; ++q1)
      for (int q2 = 0; q2 < p; ++q2) sigma(ix.beta(q1), ix.beta(q2)) += norm * block(q1, q2);
  }
  // beta-gamma
  for (int q = 0; q < p; ++q) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += alpha[i] * C.row(i).dot(ext.G1d[q].row(i));
    sigma(ix.beta(q), ix.gamma()) = sigma(ix.gamma(), ix.beta(q)) = norm * acc;
  }
  // gamma-gamma
  {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += C.row(i) * ext.Gamma_dd * C.row(i).transpose();
      acc += alpha[i] * C.row(i).dot(ext.Gdd.row(i));
      acc += C.row(i) * ext.Gamma_e * C.row(i).transpose();
      acc -= C.row(i).dot(ext.Add.row(i));
    }
    sigma(ix.gamma(), ix.gamma()) = norm * acc;
  }
  // beta-alpha and gamma-alpha
  for (int k = 0; k < n; ++k) {
    for (int q = 0; q < p; ++q) {
      const double val = 2.0 * alpha[k] * ext.V1(k, q) + C.row(k).dot(ext.G1[q].row(k)) -
                         ext.v1(k, q);
      sigma(ix.beta(q), ix.alpha(k)) = sigma(ix.alpha(k), ix.beta(q)) = norm * val;
    }
    const double valg = C.row(k).dot(ext.Gd.row(k));
    sigma(ix.gamma(), ix.alpha(k)) = sigma(ix.alpha(k), ix.gamma()) = norm * valg;
  }
  // beta-C and gamma-C
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) {
      for (int q = 0; q < p; ++q) {
        const double val = alpha[x] * ext.G1[q](x, y);
        sigma(ix.beta(q), ix.c(x, y)) = sigma(ix.c(x, y), ix.beta(q)) = norm * val;
      }
      double valg = alpha[x] * ext.Gd(x, y) - ext.Ad(x, y);
      for (int j = 0; j < n; ++j) valg += C(x, j) * (ext.Gamma_d(y, j) + ext.Gamma_d(j, y));
      sigma(ix.gamma(), ix.c(x, y)) = sigma(ix.c(x, y), ix.gamma()) = norm * valg;
    }
  // alpha-alpha (diagonal), alpha-C (within node), C-C (block diagonal)
  for (int k = 0; k < n; ++k) sigma(ix.alpha(k), ix.alpha(k)) = norm * ext.base.V[k];
  for (int k = 0; k < n; ++k)
    for (int y = 0; y < n; ++y)
      sigma(ix.alpha(k), ix.c(k, y)) = sigma(ix.c(k, y), ix.alpha(k)) = norm * ext.base.G(k, y);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int y2 = 0; y2 < n; ++y2) sigma(ix.c(x, y), ix.c(x, y2)) = norm * ext.base.Gamma(y, y2);
  return sigma;
}

ExtendedStats extended_at(const EventLog& events, const CovariateField& covariates,
                          const HawkesParams& params, std::optional<Window> window) {
  const Window w = window.value_or(Window{0.0, events.horizon});
  return compute_extended_stats(events, covariates, Theta{params.beta, params.gamma()}, w,
                                params.kernel.horizon);
}

}  // namespace

Vec compute_score(const EventLog& events, const CovariateField& covariates,
                  const HawkesParams& params, std::optional<Window> window) {
  return assemble_score(extended_at(events, covariates, params, window), params);
}

Mat compute_sigma(const EventLog& events, const CovariateField& covariates,
                  const HawkesParams& params, std::optional<Window> window, int max_n) {
  if (params.n() > max_n)
    throw std::invalid_argument("compute_sigma: n = " + std::to_string(params.n()) +
                                " exceeds the configured cap " + std::to_string(max_n) +
                                "; the stacked matrix would be prohibitively large");
  return assemble_sigma(extended_at(events, covariates, params, window), params);
}

DebiasResult stage2_debias(const StageOneResult& stage1, const EventLog& events,
                           const CovariateField& covariates, double horizon_A,
                           const DebiasOptions& opts) {
  const int n = stage1.C.rows();
  const int p = stage1.theta.p();
  if (n > opts.max_n)
    throw std::invalid_argument("stage2_debias: n exceeds the de-biasing cap " +
                                std::to_string(opts.max_n));
  const int D = stack_dim(n, p);
  const double T = events.horizon;

  HawkesParams params;
  params.C = stage1.C;
  params.alpha = stage1.alpha;
  params.beta = stage1.theta.beta;
  params.kernel = KernelSpec(stage1.theta.gamma, horizon_A);

  const ExtendedStats ext = extended_at(events, covariates, params, {});
  const Vec score = assemble_score(ext, params);
  const Mat sigma = assemble_sigma(ext, params);
  const Mat sigma2 = sigma * sigma;

  std::vector<int> unpenalized(p + 1);
  for (int q = 0; q <= p; ++q) unpenalized[q] = q;

  DebiasResult out;
  out.sigma_j = Vec::Zero(p + 1);
  out.tau_j = Vec::Zero(p + 1);
  out.score_theta = score.head(p + 1);

  Mat theta_tilde = Mat::Zero(p + 1, D);  // first p+1 rows of the approximate inverse
  Vec realized_rows = Vec::Zero(p + 1);
  const double rate = std::sqrt(std::log(static_cast<double>(D)) / (n * T));
  for (int j = 0; j <= p; ++j) {
    out.sigma_j[j] =
        opts.sigma_constant * rate * std::sqrt(std::max(sigma2(j, j), 1e-300));
    const NodewiseResult nw = nodewise_lasso_sq(sigma2, j, out.sigma_j[j], unpenalized);
    out.tau_j[j] = nw.tau;
    if (!(nw.tau > 0.0)) {
      out.tau_nonpos.push_back(j);
      continue;  // row flagged; theta_bar keeps the stage-1 coordinate
    }
    realized_rows[j] = nw.realized_gap;
    theta_tilde(j, j) = 1.0 / nw.tau;
    for (int k = 0; k < D; ++k) {
      if (k == j) continue;
      theta_tilde(j, k) = -nw.v[k < j ? k : k - 1] / nw.tau;
    }
  }

  // theta_bar = theta_check - ThetaTilde * Sigma * score; the realized
  // approximation quality || ThetaTilde Sigma^2 - J ||_max comes from the
  // solver's extended-precision certificate per row.
  const Vec correction = theta_tilde * (sigma * score);
  Vec theta_vec = pack_theta(stage1.theta);
  out.bound = 0.0;
  out.realized = 0.0;
  for (int j = 0; j <= p; ++j) {
    if (std::find(out.tau_nonpos.begin(), out.tau_nonpos.end(), j) != out.tau_nonpos.end())
      continue;
    theta_vec[j] -= correction[j];
    out.bound = std::max(out.bound, out.sigma_j[j] / out.tau_j[j]);
    out.realized = std::max(out.realized, realized_rows[j]);
  }
  out.theta_bar = unpack_theta(theta_vec);
  return out;
}

StageThreeResult stage3_fit(const EventLog& events, const CovariateField& covariates,
                            const Theta& theta_bar, const Vec& omega, const ThetaBox& box,
                            const FitOptions& opts) {
  StageThreeResult out;
  out.theta_used = box.clip(theta_bar);
  out.theta_clipped = !box.contains(theta_bar);
  const double A = opts.resolved_horizon(box);
  const StatsBuilder builder(events, covariates, Window{0.0, events.horizon}, A);
  const SuffStats stats = builder.stats(out.theta_used);
  const RowsFit rows = fit_rows(stats, omega, opts.kkt_tol, opts.stability_margin);
  out.C = rows.C;
  out.alpha = rows.alpha;
  out.kkt_max = rows.kkt_max;
  return out;
}

namespace {

// Per-event excitation snapshot for one decay value: at each event (global
// time order), w_j(t-) for all j. Used by the tuning suprema.
struct EventSnapshot {
  std::vector<int> node;       // event owner
  std::vector<Vec> w;          // pre-jump excitation per source node
};

EventSnapshot event_excitations(const EventLog& events, double gamma, double A, Window window) {
  struct Item {
    double t;
    int node;
    int kind;  // 0 event, 1 expiry
  };
  std::vector<Item> items;
  for (int j = 0; j < events.n(); ++j)
    for (double s : events.times[j]) {
      if (s > window.t0 && s <= window.t1) items.push_back({s, j, 0});
      const double e = s + A;
      if (e > window.t0 && e < window.t1) items.push_back({e, j, 1});
    }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    return a.t < b.t || (a.t == b.t && a.kind > b.kind);  // expiries first at ties
  });

  const double expA = std::exp(-gamma * A);
  Vec w = Vec::Zero(events.n());
  for (int j = 0; j < events.n(); ++j)
    for (double s : events.times[j])
      if (s <= window.t0 && window.t0 - s < A) w[j] += std::exp(-gamma * (window.t0 - s));

  EventSnapshot snap;
  double t = window.t0;
  for (const Item& item : items) {
    if (item.t > t) {
      w *= std::exp(-gamma * (item.t - t));
      t = item.t;
    }
    if (item.kind == 1) {
      w[item.node] = std::max(0.0, w[item.node] - expA);
    } else {
      snap.node.push_back(item.node);
      snap.w.push_back(w);
      w[item.node] += 1.0;
    }
  }
  return snap;
}

std::vector<Vec> beta_grid_points(const ThetaBox& box, int per_coord) {
  const int p = box.p();
  std::vector<Vec> grid;
  if (p == 0) {
    grid.push_back(Vec(0));
    return grid;
  }
  std::size_t total = 1;
  for (int q = 0; q < p; ++q) {
    total *= per_coord;
    if (total > 100000) throw std::invalid_argument("theory_tuning: beta grid too large");
  }
  for (std::size_t idx = 0; idx < total; ++idx) {
    Vec beta(p);
    std::size_t rem = idx;
    for (int q = 0; q < p; ++q) {
      const int k = static_cast<int>(rem % per_coord);
      rem /= per_coord;
      beta[q] = box.beta_lo[q] + (box.beta_hi[q] - box.beta_lo[q]) * k / (per_coord - 1);
    }
    grid.push_back(beta);
  }
  return grid;
}

}  // namespace

TuningValues theory_tuning(const EventLog& events, const CovariateField& covariates,
                           const HawkesParams& pilot, const ThetaBox& box,
                           const TuningConstants& constants, OmegaRule rule,
                           std::optional<Window> window_opt) {
  const Window window = window_opt.value_or(Window{0.0, events.horizon});
  const double T = window.length();
  const int n = events.n();
  const int p = box.p();
  const double A = pilot.kernel.horizon;
  const double mu = constants.mu;
  const double phi = std::exp(mu) - mu - 1.0;
  if (!(mu > 0.0) || !(mu < 3.0) || !(mu > phi))
    throw std::invalid_argument("theory_tuning: mu must be in (0,3) with mu > exp(mu)-mu-1");
  const double denom = mu - phi;

  const double log_n = std::log(static_cast<double>(n));
  const double log_T = std::log(T);
  const double log_nT = std::log(n * T);

  // block-count indicator and its smallest feasible scale constant
  double max_block = 0.0;
  for (int i = 0; i < n; ++i) {
    for (double t0 = window.t0; t0 < window.t1; t0 += A) {
      const auto& ts = events.times[i];
      const auto lo = std::lower_bound(ts.begin(), ts.end(), t0);
      const auto hi = std::lower_bound(ts.begin(), ts.end(), std::min(t0 + A, window.t1));
      max_block = std::max(max_block, static_cast<double>(hi - lo));
    }
  }
  TuningValues out;
  out.mu = mu;
  out.alpha1 = constants.alpha1;
  out.alpha2 = constants.alpha2;
  out.alpha3 = constants.alpha3;
  out.alpha4 = constants.alpha4;
  out.n_zero = constants.n_zero > 0.0 ? constants.n_zero
                                      : std::max(1.0, max_block / (3.0 * log_nT));
  out.block_count_ok = max_block <= 3.0 * out.n_zero * log_nT;
  const double indicator = out.block_count_ok ? 1.0 : 0.0;
  out.k_alpha = constants.k_alpha > 0.0
                    ? constants.k_alpha
                    : (pilot.alpha.size() > 0 ? pilot.alpha.maxCoeff() : 1.0);

  // ----- covariate-side suprema over the beta grid -----
  const auto grid = beta_grid_points(box, constants.beta_grid);
  // covariate rows per segment restricted to the window
  std::vector<int> window_segments;
  for (int r = 0; r < covariates.num_segments(); ++r)
    if (covariates.boundaries[r + 1] > window.t0 && covariates.boundaries[r] < window.t1)
      window_segments.push_back(r);
  // per-event covariate segment
  std::vector<std::vector<int>> event_seg(n);
  for (int i = 0; i < n; ++i)
    for (double s : events.times[i])
      if (s > window.t0 && s <= window.t1) event_seg[i].push_back(covariates.segment_index(s));

  double v_a = 0.0, nu_bar = 0.0, l_nu = 0.0, v_b_sup = 0.0;
  for (const Vec& beta_bar : grid) {
    for (int r : window_segments)
      for (int i = 0; i < n; ++i) {
        const double nu = p > 0 ? std::exp(covariates.values[r].row(i).dot(beta_bar)) : 1.0;
        nu_bar = std::max(nu_bar, nu);
        if (p > 0) l_nu = std::max(l_nu, covariates.values[r].row(i).norm() * nu);
      }
    double sup_i = 0.0;
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int seg : event_seg[i]) {
        const double nu = p > 0 ? std::exp(covariates.values[seg].row(i).dot(beta_bar)) : 1.0;
        acc += nu * nu;
      }
      sup_i = std::max(sup_i, acc);
    }
    v_a = std::max(v_a, 16.0 * mu * sup_i / (denom * T * T));

    // V-hat-b: mean value path from the pilot beta toward beta_bar,
    // maximized over unit-L1 directions (attained at coordinate vertices)
    if (p > 0) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        for (int seg : event_seg[i]) {
          const auto x = covariates.values[seg].row(i);
          const double base = std::exp(x.dot(pilot.beta));
          const double z = x.dot(beta_bar - pilot.beta);
          const double psi = std::abs(z) < 1e-12 ? 1.0 : std::expm1(z) / z;
          double best_coord = 0.0;
          for (int q = 0; q < p; ++q) best_coord = std::max(best_coord, std::abs(x[q]));
          const double integrand = best_coord * base * psi;
          acc += integrand * integrand;
        }
      v_b_sup = std::max(v_b_sup, 16.0 * out.k_alpha * out.k_alpha * mu * acc /
                                      (denom * n * n * T * T));
    }
  }
  if (p == 0) nu_bar = std::max(nu_bar, 1.0);

  const double la = log_n + p * log_T + constants.alpha1 * log_nT;
  v_a += 16.0 * nu_bar * nu_bar * la / (denom * T * T);
  out.a_n = indicator * (2.0 * std::sqrt(v_a * la) + 4.0 * nu_bar * la / (3.0 * T));

  const double lb = (2.0 * p + constants.alpha2) * log_nT;
  const double v_b = v_b_sup + 16.0 * out.k_alpha * out.k_alpha * l_nu * l_nu * lb /
                                   (denom * n * n * T * T);
  out.b_n = indicator *
            (2.0 * std::sqrt(v_b * lb) + 4.0 * out.k_alpha * l_nu * lb / (3.0 * n * T));

  // ----- kernel-side suprema over the gamma grid -----
  const double g_bar = 1.0;  // sup of the exponential kernel
  const double l_g = (1.0 / box.gamma_lo <= A) ? 1.0 / (std::exp(1.0) * box.gamma_lo)
                                               : A * std::exp(-box.gamma_lo * A);
  const double ld = log_n + log_nT + constants.alpha3 * log_T;
  const double d_floor =
      567.0 * g_bar * g_bar * out.n_zero * out.n_zero * log_nT * log_nT * ld / (denom * T * T);

  Mat sup_w2 = Mat::Zero(n, n);  // sup over gamma of sum_{events of i} w_j^2
  double v_e_sup = 0.0;
  const double max_row_c =
      pilot.C.size() > 0 ? pilot.C.rowwise().lpNorm<1>().maxCoeff() : 0.0;

  const EventSnapshot snap_star = event_excitations(events, pilot.gamma(), A, window);
  for (int k = 0; k < constants.gamma_grid; ++k) {
    const double gamma_bar =
        box.gamma_lo + (box.gamma_hi - box.gamma_lo) * k / (constants.gamma_grid - 1);
    const EventSnapshot snap = event_excitations(events, gamma_bar, A, window);
    Mat acc = Mat::Zero(n, n);
    double acc_e = 0.0;
    const double dgamma = gamma_bar - pilot.gamma();
    for (std::size_t e = 0; e < snap.node.size(); ++e) {
      const int i = snap.node[e];
      acc.row(i) += snap.w[e].cwiseProduct(snap.w[e]).transpose();
      if (pilot.C.size() > 0) {
        // d/dgamma of the kernel averaged over the segment [gamma*, gamma_bar]
        Vec deriv_avg(n);
        if (std::abs(dgamma) < 1e-12) {
          // limit: the age-weighted path; recover it from finite difference
          const double eps = 1e-6;
          const EventSnapshot bump = event_excitations(events, pilot.gamma() + eps, A, window);
          deriv_avg = (bump.w[e] - snap_star.w[e]) / eps;
        } else {
          deriv_avg = (snap.w[e] - snap_star.w[e]) / dgamma;
        }
        const double val = 4.0 * pilot.C.row(i).dot(deriv_avg) / (n * T);
        acc_e += val * val;
      }
    }
    sup_w2 = sup_w2.cwiseMax(acc);
    v_e_sup = std::max(v_e_sup, mu * acc_e / denom);
  }

  out.d_n = Vec::Zero(n);
  for (int i = 0; i < n; ++i) {
    const double v_d = 16.0 * mu * sup_w2.row(i).maxCoeff() / (denom * T * T) + d_floor;
    out.d_n[i] = indicator * (2.0 * std::sqrt(v_d * ld) +
                              24.0 * g_bar * out.n_zero * log_nT * ld / (3.0 * T));
  }

  const double le = (1.0 + constants.alpha4) * log_nT;
  const double v_e = v_e_sup + 576.0 * l_g * l_g * out.n_zero * out.n_zero *
                                   (1.0 + constants.alpha4) * max_row_c * max_row_c *
                                   log_nT * log_nT * log_nT / (denom * n * n * T * T);
  out.e_n = indicator * (2.0 * std::sqrt(v_e * le) + 24.0 * l_g * out.n_zero *
                                                         (1.0 + constants.alpha4) * max_row_c *
                                                         log_nT * log_nT / (3.0 * n * T));

  out.omega = rule == OmegaRule::kThreeD ? (3.0 * out.d_n).eval() : out.d_n;
  return out;
}

namespace {

// Golden-section state probing one point per cross-validation round.
struct GoldenSection {
  double lo, hi, x1, x2;
  double f1 = kInf, f2 = kInf;
  int stage = 0;
  static constexpr double kInvPhi = 0.6180339887498949;

  GoldenSection(double lo_, double hi_) : lo(lo_), hi(hi_) {
    x1 = hi - kInvPhi * (hi - lo);
    x2 = lo + kInvPhi * (hi - lo);
  }
  double next_probe() const { return stage == 0 ? x1 : (stage == 1 ? x2 : pending_); }
  void report(double f) {
    if (stage == 0) {
      f1 = f;
      stage = 1;
    } else if (stage == 1) {
      f2 = f;
      stage = 2;
      shrink();
    } else {
      if (pending_is_x1_) f1 = f; else f2 = f;
      shrink();
    }
  }

 private:
  void shrink() {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      pending_ = x1;
      pending_is_x1_ = true;
      f1 = kInf;
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      pending_ = x2;
      pending_is_x1_ = false;
      f2 = kInf;
    }
  }
  double pending_ = 0.0;
  bool pending_is_x1_ = true;
};

}  // namespace

CvResult cross_validate(const EventLog& events, const CovariateField& covariates,
                        const ThetaBox& box, const FitOptions& fit_opts,
                        const CvOptions& cv_opts, std::optional<Vec> omega_init) {
  const double T = events.horizon;
  const double S = cv_opts.split > 0.0 ? cv_opts.split : 2.0 * T / 3.0;
  if (!(S > 0.0 && S < T)) throw std::invalid_argument("cross_validate: need 0 < S < T");
  if (cv_opts.rounds < 1) throw std::invalid_argument("cross_validate: need at least one round");
  const int n = events.n();

  CvResult result;
  if (omega_init) {
    result.omega_init = *omega_init;
  } else {
    // only the d-values feed omega, so a neutral pilot suffices
    HawkesParams pilot;
    pilot.C = Mat::Zero(n, n);
    pilot.alpha = Vec::Ones(n);
    pilot.beta = Vec::Zero(box.p());
    pilot.kernel = KernelSpec(0.5 * (box.gamma_lo + box.gamma_hi),
                              fit_opts.resolved_horizon(box));
    result.omega_init =
        theory_tuning(events, covariates, pilot, box).omega;
  }

  const double A = fit_opts.resolved_horizon(box);
  const StatsBuilder test_builder(events, covariates, Window{S, T}, A);

  std::vector<GoldenSection> search;
  for (int i = 0; i < n; ++i) {
    const double anchor = std::log10(std::max(result.omega_init[i], 1e-12));
    search.emplace_back(anchor + cv_opts.bracket_lo_decades, anchor + cv_opts.bracket_hi_decades);
  }

  std::vector<std::vector<std::pair<double, double>>> scored(n);  // (omega, test LS)

  FitOptions round_opts = fit_opts;
  round_opts.seed = fit_opts.seed ^ 0x5bd1e995;

  auto evaluate = [&](const Vec& omega) {
    const StageOneResult fit =
        stage1_fit(events, covariates, omega, box, round_opts, Window{0.0, S});
    const SuffStats test_stats = test_builder.stats(fit.theta);
    CvRound round;
    round.omega = omega;
    round.test_ls = Vec(n);
    for (int i = 0; i < n; ++i)
      round.test_ls[i] = ls_value(test_stats, fit.C.row(i), fit.alpha[i], i);
    result.trace.push_back(round);
    return round.test_ls;
  };

  // anchor fit at the theory values (kept in the trace, not a candidate)
  evaluate(result.omega_init);

  Vec pending(n);
  for (int m = 1; m <= cv_opts.rounds; ++m) {
    for (int i = 0; i < n; ++i) pending[i] = std::pow(10.0, search[i].next_probe());
    const Vec ls = evaluate(pending);
    for (int i = 0; i < n; ++i) {
      scored[i].emplace_back(pending[i], ls[i]);
      search[i].report(ls[i]);
    }
  }

  result.omega = Vec(n);
  for (int i = 0; i < n; ++i) {
    auto best = std::min_element(scored[i].begin(), scored[i].end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; });
    result.omega[i] = best->first;
  }
  return result;
}

double compatibility_diagnostic(const SuffStats& stats, int i) {
  const int n = stats.n();
  if (i < 0 || i >= n) throw std::invalid_argument("compatibility_diagnostic: bad node");
  Mat m(n + 1, n + 1);
  m(0, 0) = stats.V[i];
  m.block(0, 1, 1, n) = stats.G.row(i);
  m.block(1, 0, n, 1) = stats.G.row(i).transpose();
  m.block(1, 1, n, n) = stats.Gamma;
  m /= stats.window.length();
  return Eigen::SelfAdjointEigenSolver<Mat>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

Vec residual_check(const EventLog& events, const CovariateField& covariates,
                   const HawkesParams& params, std::optional<Window> window_opt) {
  const Window window = window_opt.value_or(Window{0.0, events.horizon});
  const SuffStats stats = compute_stats(events, covariates, Theta{params.beta, params.gamma()},
                                        window, params.kernel.horizon);
  Vec residual(stats.n());
  for (int i = 0; i < stats.n(); ++i) {
    const double compensator =
        params.alpha[i] * stats.baseline_int[i] + params.C.row(i).dot(stats.excite_int);
    residual[i] = stats.event_count[i] - compensator;
  }
  return residual;
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

nlohmann::json theta_json(const Theta& theta) {
  return {{"beta", vec_json(theta.beta)}, {"gamma", theta.gamma}};
}

}  // namespace

std::string fit_report_to_json(const FitReport& report) {
  nlohmann::json j;
  j["stages"] = report.stages;
  j["omega_source"] = report.omega_source;
  j["horizon_A"] = report.horizon_A;
  j["dropped_tail_mass"] = report.dropped_tail_mass;

  nlohmann::json s1;
  s1["C"] = mat_json(report.stage1.C);
  s1["alpha"] = vec_json(report.stage1.alpha);
  s1["theta"] = theta_json(report.stage1.theta);
  s1["criterion"] = report.stage1.criterion;
  s1["kkt_max"] = report.stage1.kkt_max;
  s1["theta_fixed"] = report.stage1.theta_fixed;
  s1["l1_bound_hit"] = report.stage1.l1_bound_hit;
  s1["restarts"] = nlohmann::json::array();
  for (const auto& r : report.stage1.restarts)
    s1["restarts"].push_back({{"start", theta_json(r.start)},
                              {"end", theta_json(r.end)},
                              {"criterion", r.criterion},
                              {"evals", r.evals}});
  j["stage1"] = s1;

  if (report.stage2) {
    nlohmann::json s2;
    s2["theta_bar"] = theta_json(report.stage2->theta_bar);
    s2["sigma_j"] = vec_json(report.stage2->sigma_j);
    s2["tau_j"] = vec_json(report.stage2->tau_j);
    s2["bound"] = report.stage2->bound;
    s2["realized"] = report.stage2->realized;
    s2["tau_nonpos"] = report.stage2->tau_nonpos;
    s2["score_theta"] = vec_json(report.stage2->score_theta);
    j["stage2"] = s2;
  }
  if (report.stage3) {
    nlohmann::json s3;
    s3["C"] = mat_json(report.stage3->C);
    s3["alpha"] = vec_json(report.stage3->alpha);
    s3["theta_used"] = theta_json(report.stage3->theta_used);
    s3["theta_clipped"] = report.stage3->theta_clipped;
    s3["kkt_max"] = report.stage3->kkt_max;
    j["stage3"] = s3;
  }

  nlohmann::json tuning;
  tuning["a_n"] = report.tuning.a_n;
  tuning["b_n"] = report.tuning.b_n;
  tuning["e_n"] = report.tuning.e_n;
  tuning["d_n"] = vec_json(report.tuning.d_n);
  tuning["omega"] = vec_json(report.tuning.omega);
  tuning["mu"] = report.tuning.mu;
  tuning["n_zero"] = report.tuning.n_zero;
  tuning["k_alpha"] = report.tuning.k_alpha;
  tuning["block_count_ok"] = report.tuning.block_count_ok;
  j["tuning"] = tuning;

  j["residuals"] = vec_json(report.residuals);
  j["compatibility"] = vec_json(report.compatibility);
  return j.dump(2);
}

}  // namespace hawkesnet
