#include "hawkesnet/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "hawkesnet/rng.hpp"

namespace hawkesnet {

namespace {
// Fixed substream ids so that each DGP stage draws independently.
constexpr std::uint64_t kStreamShocks = 1;
constexpr std::uint64_t kStreamNoise = 2;
constexpr std::uint64_t kStreamAlpha = 3;
constexpr std::uint64_t kStreamNetwork = 4;
constexpr std::uint64_t kStreamEvents = 5;
}  // namespace

void DgpConfig::validate() const {
  if (n < 1) throw std::invalid_argument("DgpConfig: n must be >= 1");
  if (!(T > 0.0)) throw std::invalid_argument("DgpConfig: T must be positive");
  if (!(segment_length > 0.0)) throw std::invalid_argument("DgpConfig: segment_length must be positive");
  if (shock_count < 0) throw std::invalid_argument("DgpConfig: shock_count must be >= 0");
  if (noise_sd < 0.0) throw std::invalid_argument("DgpConfig: noise_sd must be >= 0");
  if (!(alpha_min <= alpha_max) || alpha_min < 0.0)
    throw std::invalid_argument("DgpConfig: need 0 <= alpha_min <= alpha_max");
  if (edge_weight < 0.0) throw std::invalid_argument("DgpConfig: edge_weight must be >= 0");
  if (!(gamma_true > 0.0)) throw std::invalid_argument("DgpConfig: gamma_true must be positive");
  if (!(shock_duration >= 0.0)) throw std::invalid_argument("DgpConfig: shock_duration must be >= 0");
}

CovariateDraw simulate_covariates(const DgpConfig& config) {
  config.validate();
  const double h = config.segment_length;
  const int R = static_cast<int>(std::ceil(config.T / h - 1e-9));

  CovariateDraw draw;
  draw.field.boundaries.resize(R + 1);
  for (int r = 0; r < R; ++r) draw.field.boundaries[r] = r * h;
  draw.field.boundaries[R] = config.T;

  RngStream shock_rng = RngStream::substream(config.seed, kStreamShocks);
  std::vector<int> shock_segments(config.shock_count);
  for (int s = 0; s < config.shock_count; ++s) {
    const double t = shock_rng.uniform(0.0, config.T);
    shock_segments[s] = std::min(static_cast<int>(t / h), R - 1);
  }

  const int active_segments = static_cast<int>(std::floor(config.shock_duration / h + 1e-12));
  draw.mean_path.assign(R, 0.0);
  for (int r0 : shock_segments)
    for (int r = r0; r < R && r - r0 <= active_segments; ++r) {
      const int k = r - r0;
      const double factor = config.decay_law == ShockDecayLaw::kMultiplicative
                                ? std::pow(1.0 - config.shock_decay, k)
                                : std::exp(-config.shock_decay * k);
      draw.mean_path[r] += config.shock_amplitude * factor;
    }

  RngStream noise_rng = RngStream::substream(config.seed, kStreamNoise);
  const int p = static_cast<int>(config.beta_true.size());
  draw.field.values.assign(R, Mat::Zero(config.n, p));
  for (int r = 0; r < R; ++r) {
    const double value = draw.mean_path[r] + (config.noise_sd > 0.0 ? config.noise_sd * noise_rng.normal() : 0.0);
    if (p > 0) draw.field.values[r].col(0).setConstant(value);  // shocks drive the first coordinate
  }
  return draw;
}

EventLog simulate_hawkes(const HawkesParams& params, const CovariateField& covariates,
                         double T, std::uint64_t seed, std::size_t event_cap) {
  const ParamCheck check = validate_params(params);
  if (!check.ok) {
    std::string msg = "simulate_hawkes: invalid parameters:";
    for (const auto& f : check.failures) msg += " " + f + ";";
    throw std::invalid_argument(msg);
  }
  covariates.validate();
  if (covariates.horizon() < T) throw std::invalid_argument("simulate_hawkes: covariates do not cover [0, T]");

  const int n = params.n();
  const double gamma = params.kernel.gamma;
  const double A = params.kernel.horizon;
  const double expA = std::exp(-gamma * A);

  EventLog log;
  log.horizon = T;
  log.times.resize(n);

  // Per-segment baseline total and per-node baselines.
  const auto& bounds = covariates.boundaries;
  int seg = 0;
  Vec base(n);
  auto refresh_baseline = [&](int r) {
    for (int i = 0; i < n; ++i)
      base[i] = params.alpha[i] * baseline_eval(covariates.values[r].row(i), params.beta);
  };
  refresh_baseline(0);

  Vec w = Vec::Zero(n);                  // truncated excitation state per source node
  const Vec colsum = params.C.colwise().sum();
  // expiries: (time, node), processed in order so w stays exactly truncated
  using Expiry = std::pair<double, int>;
  std::priority_queue<Expiry, std::vector<Expiry>, std::greater<>> expiries;

  RngStream rng = RngStream::substream(seed, kStreamEvents);
  double t = 0.0;
  std::size_t total = 0;
  Vec lambda(n);

  auto decay_to = [&](double target) {
    const double dt = target - t;
    if (dt > 0.0) w *= std::exp(-gamma * dt);
    t = target;
  };

  while (t < T) {
    const double seg_end = bounds[seg + 1];
    const double next_expiry = expiries.empty() ? T : expiries.top().first;
    const double milestone = std::min({seg_end, next_expiry, T});

    const double envelope = base.sum() + colsum.dot(w);
    double t_cand = envelope > 0.0 ? t + rng.exponential(envelope) : milestone;

    if (t_cand >= milestone) {
      decay_to(milestone);
      if (!expiries.empty() && expiries.top().first <= milestone) {
        w[expiries.top().second] = std::max(0.0, w[expiries.top().second] - expA);
        expiries.pop();
      } else if (milestone == seg_end && seg + 1 < covariates.num_segments()) {
        ++seg;
        refresh_baseline(seg);
      } else if (milestone >= T) {
        break;
      }
      continue;
    }

    decay_to(t_cand);
    for (int i = 0; i < n; ++i) lambda[i] = base[i] + params.C.row(i).dot(w);
    const double total_rate = lambda.sum();
    double u = rng.uniform01() * envelope;
    if (u <= total_rate) {
      int node = n - 1;
      for (int i = 0; i < n; ++i) {
        if (u <= lambda[i]) {
          node = i;
          break;
        }
        u -= lambda[i];
      }
      log.times[node].push_back(t);
      if (log.times[node].size() > event_cap) {
        throw SimulationOverflow("simulate_hawkes: node " + std::to_string(node + 1) + " exceeded " +
                                 std::to_string(event_cap) + " events by time " + std::to_string(t) +
                                 " (branching " + std::to_string(check.branching) + ")");
      }
      ++total;
      w[node] += 1.0;  // g(0) = 1
      expiries.emplace(t + A, node);
    }
  }
  (void)total;
  return log;
}

Vec expected_count_stationary(const HawkesParams& params, const Vec& nu_bar) {
  const int n = params.n();
  if (nu_bar.size() != n) throw std::invalid_argument("expected_count_stationary: nu_bar size mismatch");
  const double mass = kernel_mass(params.kernel);
  if (n > 0 && params.C.size() > 0) {
    const Eigen::VectorXcd eigs = Eigen::EigenSolver<Mat>(params.C, false).eigenvalues();
    const double rho = eigs.cwiseAbs().maxCoeff() * mass;
    if (rho >= 1.0)
      throw std::invalid_argument("expected_count_stationary: spectral radius " + std::to_string(rho) +
                                  " >= 1, no stationary regime");
  }
  const Mat M = Mat::Identity(n, n) - params.C * mass;
  return M.partialPivLu().solve((params.alpha.array() * nu_bar.array()).matrix());
}

DgpDraw sample_dgp(const DgpConfig& config) {
  config.validate();
  DgpDraw draw;

  RngStream alpha_rng = RngStream::substream(config.seed, kStreamAlpha);
  RngStream net_rng = RngStream::substream(config.seed, kStreamNetwork);

  draw.params.alpha = Vec(config.n);
  for (int i = 0; i < config.n; ++i)
    draw.params.alpha[i] = alpha_rng.uniform(config.alpha_min, config.alpha_max);

  draw.params.C = Mat::Zero(config.n, config.n);
  for (int i = 0; i < config.n; ++i) {
    if (config.n == 1) break;  // no candidate parent distinct from i
    int j = net_rng.uniform_int(0, config.n - 2);
    if (j >= i) ++j;  // parent drawn uniformly from the n-1 other nodes
    draw.params.C(i, j) = config.edge_weight;
  }

  draw.params.beta = config.beta_true;
  draw.params.kernel = KernelSpec(config.gamma_true, config.resolved_horizon());

  CovariateDraw cov = simulate_covariates(config);
  draw.covariates = std::move(cov.field);
  draw.covariate_mean = std::move(cov.mean_path);
  draw.events = simulate_hawkes(draw.params, draw.covariates, config.T, config.seed, config.event_cap);
  return draw;
}

}  // namespace hawkesnet
