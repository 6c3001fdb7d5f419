#pragma once

// Event-log generation: a shared covariate path built from randomly timed
// shocks with per-segment decay, and exact Ogata thinning for the network
// process. The thinning envelope is the current excitation state plus the
// per-segment baseline bound, both refreshed in O(1) per candidate.

#include <cstdint>

#include "hawkesnet/model.hpp"

namespace hawkesnet {

enum class ShockDecayLaw {
  kMultiplicative,  // amplitude * (1 - rate)^k after k segments
  kExponential,     // amplitude * exp(-rate * k)
};

struct DgpConfig {
  int n = 10;
  double T = 34.0;                   // days
  double segment_length = 1.0 / 24;  // hourly covariate updates
  int shock_count = 8;
  double shock_amplitude = 0.8;
  double shock_decay = 0.05;         // per segment
  double shock_duration = 10.0;      // days a shock stays active
  double noise_sd = 0.05;
  double alpha_min = 0.5;
  double alpha_max = 1.0;
  double edge_weight = 0.5;
  Vec beta_true = Vec::Ones(1);
  double gamma_true = 1.1;
  std::uint64_t seed = 1;

  ShockDecayLaw decay_law = ShockDecayLaw::kMultiplicative;
  double kernel_horizon = 0.0;       // 0 = auto so that exp(-gamma*A) <= 1e-12
  std::size_t event_cap = 1000000;   // per node, explosion guard

  double resolved_horizon() const {
    return kernel_horizon > 0.0 ? kernel_horizon : KernelSpec::default_horizon(gamma_true);
  }
  void validate() const;
};

struct CovariateDraw {
  CovariateField field;
  std::vector<double> mean_path;  // noiseless per-segment mean, shared by all nodes
};

/// One shared piecewise-constant path for all nodes; shock times are uniform
/// on [0, T] and overlapping shocks add up. Streams are derived from
/// config.seed, so the draw is independent of the other sample_dgp stages.
CovariateDraw simulate_covariates(const DgpConfig& config);

/// Thrown when the explosion guard trips.
struct SimulationOverflow : std::runtime_error {
  using std::runtime_error::runtime_error;
};

EventLog simulate_hawkes(const HawkesParams& params, const CovariateField& covariates,
                         double T, std::uint64_t seed, std::size_t event_cap = 1000000);

/// Stationary mean event rate (I - C*mass)^{-1} (alpha .* nu_bar);
/// throws if the spectral radius of C*mass is >= 1.
Vec expected_count_stationary(const HawkesParams& params, const Vec& nu_bar);

struct DgpDraw {
  HawkesParams params;
  CovariateField covariates;
  std::vector<double> covariate_mean;
  EventLog events;
};

/// Full draw: alpha ~ U[alpha_min, alpha_max], one uniformly chosen parent
/// j != i per node with weight edge_weight, fixed (beta, gamma), then the
/// covariate path and the event log.
DgpDraw sample_dgp(const DgpConfig& config);

}  // namespace hawkesnet
