#include "hawkesnet/model.hpp"

#include <algorithm>
#include <cmath>

namespace hawkesnet {

double KernelSpec::default_horizon(double gamma, double tail_tol) {
  if (gamma <= 0.0) throw std::invalid_argument("kernel gamma must be > 0");
  if (tail_tol <= 0.0 || tail_tol >= 1.0) throw std::invalid_argument("tail_tol must be in (0,1)");
  // the nudge keeps exp(-gamma * A) at or below the tolerance despite rounding
  return -std::log(tail_tol) / gamma * (1.0 + 1e-9);
}

KernelSpec KernelSpec::with_default_horizon(double gamma, double tail_tol) {
  return KernelSpec(gamma, default_horizon(gamma, tail_tol));
}

double KernelSpec::dropped_tail_mass() const {
  return std::exp(-gamma * horizon) / gamma;
}

void KernelSpec::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("kernel gamma must be positive and finite");
  if (!(horizon > 0.0)) throw std::invalid_argument("kernel horizon must be positive");
}

double kernel_eval(double u, const KernelSpec& kernel) {
  if (u < 0.0) throw std::domain_error("kernel_eval: negative lag");
  if (u > kernel.horizon) return 0.0;
  return std::exp(-kernel.gamma * u);
}

double kernel_mass(const KernelSpec& kernel) {
  kernel.validate();
  return -std::expm1(-kernel.gamma * kernel.horizon) / kernel.gamma;
}

double baseline_eval(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& beta) {
  if (x.size() != beta.size())
    throw std::invalid_argument("baseline_eval: covariate/coefficient dimension mismatch");
  return std::exp(x.dot(beta));
}

ParamCheck validate_params(const HawkesParams& params, double margin) {
  ParamCheck check;
  const int n = params.n();
  if (params.C.rows() != n || params.C.cols() != n)
    check.failures.push_back("C must be n x n with n = alpha size");
  if (!(params.kernel.gamma > 0.0))
    check.failures.push_back("gamma must be positive");
  if (!(params.kernel.horizon > 0.0))
    check.failures.push_back("kernel horizon must be positive");
  if ((params.alpha.array() < 0.0).any())
    check.failures.push_back("alpha has negative entries");
  if (params.C.size() > 0 && (params.C.array() < 0.0).any())
    check.failures.push_back("C has negative entries");
  if (!params.C.allFinite() || !params.alpha.allFinite() || !params.beta.allFinite())
    check.failures.push_back("non-finite parameter values");

  if (check.failures.empty()) {
    const double mass = kernel_mass(params.kernel);
    double max_row = 0.0;
    for (int i = 0; i < params.C.rows(); ++i)
      max_row = std::max(max_row, params.C.row(i).lpNorm<1>());
    check.branching = max_row * mass;
    if (!(check.branching < 1.0 - margin))
      check.failures.push_back("row L1 norm times kernel mass is not < 1 (branching factor " +
                               std::to_string(check.branching) + ")");
  }
  check.ok = check.failures.empty();
  return check;
}

std::size_t EventLog::total_events() const {
  std::size_t total = 0;
  for (const auto& ts : times) total += ts.size();
  return total;
}

void EventLog::validate() const {
  if (!(horizon > 0.0)) throw std::invalid_argument("EventLog horizon must be positive");
  for (int i = 0; i < n(); ++i) {
    double prev = 0.0;
    for (double t : times[i]) {
      if (!(t > prev))
        throw std::invalid_argument("EventLog: node " + std::to_string(i + 1) +
                                    " has non-increasing or non-positive event times");
      if (t > horizon)
        throw std::invalid_argument("EventLog: event beyond horizon on node " + std::to_string(i + 1));
      prev = t;
    }
  }
}

int CovariateField::segment_index(double t) const {
  if (boundaries.size() < 2) throw std::invalid_argument("CovariateField has no segments");
  if (t < boundaries.front() || t > boundaries.back())
    throw std::out_of_range("CovariateField: time outside [0, T]");
  // upper_bound returns the first boundary strictly greater than t
  auto it = std::upper_bound(boundaries.begin(), boundaries.end(), t);
  int idx = static_cast<int>(it - boundaries.begin()) - 1;
  return std::min(idx, num_segments() - 1);
}

Vec CovariateField::value_at(int node, double t) const {
  return values.at(segment_index(t)).row(node);
}

CovariateField CovariateField::empty(int n, double T) {
  CovariateField field;
  field.boundaries = {0.0, T};
  field.values.push_back(Mat::Zero(n, 0));
  return field;
}

void CovariateField::validate() const {
  if (boundaries.size() < 2 || boundaries.front() != 0.0)
    throw std::invalid_argument("CovariateField: boundaries must start at 0 and contain at least one segment");
  for (std::size_t r = 1; r < boundaries.size(); ++r)
    if (!(boundaries[r] > boundaries[r - 1]))
      throw std::invalid_argument("CovariateField: boundaries must be strictly increasing");
  if (values.size() + 1 != boundaries.size())
    throw std::invalid_argument("CovariateField: need one value matrix per segment");
  for (const auto& m : values)
    if (m.rows() != values.front().rows() || m.cols() != values.front().cols())
      throw std::invalid_argument("CovariateField: inconsistent value shapes");
}

Vec intensity(const HawkesParams& params, const EventLog& events,
              const CovariateField& covariates, double t) {
  const int n = params.n();
  if (t < 0.0 || t > events.horizon) throw std::out_of_range("intensity: t outside [0, T]");

  Vec excite = Vec::Zero(n);
  const double gamma = params.kernel.gamma;
  const double horizon = params.kernel.horizon;
  for (int j = 0; j < n; ++j) {
    const auto& ts = events.times[j];
    // events s with t - horizon <= s < t
    auto lo = std::lower_bound(ts.begin(), ts.end(), t - horizon);
    auto hi = std::lower_bound(ts.begin(), ts.end(), t);
    double w = 0.0;
    for (auto it = lo; it != hi; ++it) w += std::exp(-gamma * (t - *it));
    excite[j] = w;
  }

  Vec lambda(n);
  for (int i = 0; i < n; ++i) {
    const double base = baseline_eval(covariates.value_at(i, t), params.beta);
    lambda[i] = params.alpha[i] * base + params.C.row(i).dot(excite);
  }
  return lambda;
}

}  // namespace hawkesnet
