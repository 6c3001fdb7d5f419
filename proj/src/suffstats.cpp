#include "hawkesnet/suffstats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hawkesnet/io.hpp"

namespace hawkesnet {

namespace {

// K_m = integral_0^dt tau^m exp(-c tau) dtau for m = 0,1,2.
// Series branch avoids cancellation when c*dt is tiny.
void exp_moments(double c, double dt, double out[3]) {
  const double x = c * dt;
  if (x < 1e-3) {
    out[0] = dt * (1.0 + x * (-1.0 / 2 + x * (1.0 / 6 + x * (-1.0 / 24 + x / 120))));
    out[1] = dt * dt * (1.0 / 2 + x * (-1.0 / 3 + x * (1.0 / 8 + x * (-1.0 / 30 + x / 144))));
    out[2] = dt * dt * dt * (1.0 / 3 + x * (-1.0 / 4 + x * (1.0 / 10 + x * (-1.0 / 36 + x / 168))));
    return;
  }
  const double e = std::exp(-x);
  out[0] = -std::expm1(-x) / c;
  out[1] = (1.0 - e * (1.0 + x)) / (c * c);
  out[2] = (2.0 - e * (2.0 + x * (2.0 + x))) / (c * c * c);
}

}  // namespace

double ExcitationPath::value_before(double t) const {
  auto lo = std::lower_bound(times.begin(), times.end(), t - horizon);
  auto hi = std::lower_bound(times.begin(), times.end(), t);
  double w = 0.0;
  for (auto it = lo; it != hi; ++it) w += std::exp(-gamma * (t - *it));
  return w;
}

ExcitationPath excitation_path(const std::vector<double>& events_j, double gamma, double horizon_A) {
  if (!(gamma > 0.0) || !(horizon_A > 0.0))
    throw std::invalid_argument("excitation_path: gamma and horizon must be positive");
  if (!std::is_sorted(events_j.begin(), events_j.end()))
    throw std::invalid_argument("excitation_path: events must be sorted");
  ExcitationPath path;
  path.times = events_j;
  path.gamma = gamma;
  path.horizon = horizon_A;
  path.pre_jump.resize(events_j.size());
  for (std::size_t k = 0; k < events_j.size(); ++k)
    path.pre_jump[k] = path.value_before(events_j[k]);
  return path;
}

StatsBuilder::StatsBuilder(const EventLog& events, const CovariateField& covariates,
                           Window window, double horizon_A)
    : n_(events.n()), p_(covariates.p()), window_(window), horizon_A_(horizon_A) {
  if (!(window.t1 > window.t0)) throw std::invalid_argument("StatsBuilder: empty window");
  if (!(horizon_A > 0.0)) throw std::invalid_argument("StatsBuilder: horizon must be positive");
  covariates.validate();
  if (covariates.n() != n_ && covariates.p() > 0)
    throw std::invalid_argument("StatsBuilder: covariate/event node count mismatch");
  if (window.t1 > covariates.horizon() + 1e-12)
    throw std::invalid_argument("StatsBuilder: window extends beyond covariate grid");

  segment_x_ = covariates.values;

  // Mesh points: window ends, segment boundaries, event times, expiries.
  // Actions attached to a point fire when the walk reaches it.
  struct Action {
    int node;
    int kind;  // 0 = event, 1 = expiry
    int seg;   // event's covariate segment (kind 0)
  };
  std::map<double, std::vector<Action>> actions;
  std::vector<double> points;
  points.push_back(window.t0);
  points.push_back(window.t1);
  for (double b : covariates.boundaries)
    if (b > window.t0 && b < window.t1) points.push_back(b);

  for (int j = 0; j < n_; ++j) {
    for (double s : events.times[j]) {
      if (s <= window.t0) {
        const double age = window.t0 - s;
        if (age <= horizon_A) history_.emplace_back(j, age);
      } else if (s <= window.t1) {
        points.push_back(s);
        actions[s].push_back({j, 0, covariates.segment_index(s)});
      }
      const double expiry = s + horizon_A;
      if (expiry > window.t0 && expiry < window.t1) {
        points.push_back(expiry);
        actions[expiry].push_back({j, 1, -1});
      }
    }
  }

  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());

  cells_.reserve(points.size());
  for (std::size_t k = 0; k + 1 < points.size() + 1; ++k) {
    Cell cell;
    cell.t0 = k == 0 ? window.t0 : points[k - 1];
    cell.t1 = points[k];
    if (k == 0) continue;  // first point is window.t0 itself, no interval before it
    cell.seg = covariates.segment_index(0.5 * (cell.t0 + cell.t1));
    auto it = actions.find(cell.t1);
    if (it != actions.end()) {
      for (const Action& a : it->second) {
        if (a.kind == 0) {
          cell.events.push_back(a.node);
          cell.event_segs.push_back(a.seg);
        } else {
          cell.expiries.push_back(a.node);
        }
      }
    }
    cells_.push_back(std::move(cell));
  }
}

Mat StatsBuilder::baseline_table(const Vec& beta) const {
  const int R = static_cast<int>(segment_x_.size());
  Mat nu(R, n_);
  if (p_ == 0) {
    nu.setOnes();
    return nu;
  }
  if (beta.size() != p_) throw std::invalid_argument("StatsBuilder: beta dimension mismatch");
  for (int r = 0; r < R; ++r)
    nu.row(r) = (segment_x_[r] * beta).array().exp().transpose();
  return nu;
}

SuffStats StatsBuilder::stats(const Theta& theta) const {
  if (!(theta.gamma > 0.0)) throw std::invalid_argument("stats: gamma must be positive");
  const double gamma = theta.gamma;
  const double expA = std::exp(-gamma * horizon_A_);
  const Mat nu = baseline_table(theta.beta);

  SuffStats out;
  out.theta = theta;
  out.window = window_;
  out.horizon_A = horizon_A_;
  out.V = Vec::Zero(n_);
  out.Gamma = Mat::Zero(n_, n_);
  out.G = Mat::Zero(n_, n_);
  out.Acount = Mat::Zero(n_, n_);
  out.v = Vec::Zero(n_);
  out.baseline_int = Vec::Zero(n_);
  out.excite_int = Vec::Zero(n_);
  out.event_count = Vec::Zero(n_);

  Vec S0 = Vec::Zero(n_);
  for (const auto& [node, age] : history_) S0[node] += std::exp(-gamma * age);

  double mom[3];
  for (const Cell& cell : cells_) {
    const double dt = cell.t1 - cell.t0;
    if (dt > 0.0) {
      exp_moments(gamma, dt, mom);
      const double I1 = mom[0];
      const double I2 = -std::expm1(-2.0 * gamma * dt) / (2.0 * gamma);
      const auto nu_seg = nu.row(cell.seg).transpose();
      out.V.noalias() += nu_seg.cwiseProduct(nu_seg) * dt;
      out.baseline_int.noalias() += nu_seg * dt;
      out.G.noalias() += (nu_seg * I1) * S0.transpose();
      out.excite_int.noalias() += S0 * I1;
      out.Gamma.noalias() += (S0 * S0.transpose()) * I2;
      S0 *= std::exp(-gamma * dt);
    }
    // events first (pre-jump reads, kernel closed at age A), then expiries
    for (std::size_t e = 0; e < cell.events.size(); ++e) {
      const int i = cell.events[e];
      out.Acount.row(i) += S0.transpose();
      out.v[i] += nu(cell.event_segs[e], i);
      out.event_count[i] += 1.0;
    }
    for (int j : cell.expiries) S0[j] = std::max(0.0, S0[j] - expA);
    for (int i : cell.events) S0[i] += 1.0;
  }
  return out;
}

ExtendedStats StatsBuilder::extended(const Theta& theta) const {
  if (!(theta.gamma > 0.0)) throw std::invalid_argument("extended: gamma must be positive");
  const double gamma = theta.gamma;
  const double A = horizon_A_;
  const double expA = std::exp(-gamma * A);
  const Mat nu = baseline_table(theta.beta);

  ExtendedStats ext;
  ext.base.theta = theta;
  ext.base.window = window_;
  ext.base.horizon_A = A;
  ext.base.V = Vec::Zero(n_);
  ext.base.Gamma = Mat::Zero(n_, n_);
  ext.base.G = Mat::Zero(n_, n_);
  ext.base.Acount = Mat::Zero(n_, n_);
  ext.base.v = Vec::Zero(n_);
  ext.base.baseline_int = Vec::Zero(n_);
  ext.base.excite_int = Vec::Zero(n_);
  ext.base.event_count = Vec::Zero(n_);

  ext.V1 = Mat::Zero(n_, p_);
  ext.G1.assign(p_, Mat::Zero(n_, n_));
  ext.Gd = Mat::Zero(n_, n_);
  ext.G1d.assign(p_, Mat::Zero(n_, n_));
  ext.Gdd = Mat::Zero(n_, n_);
  ext.Gamma_d = Mat::Zero(n_, n_);
  ext.Gamma_dd = Mat::Zero(n_, n_);
  ext.Gamma_e = Mat::Zero(n_, n_);
  ext.Ad = Mat::Zero(n_, n_);
  ext.Add = Mat::Zero(n_, n_);
  ext.v1 = Mat::Zero(n_, p_);
  ext.V2.assign(n_, Mat::Zero(p_, p_));
  ext.G2.assign(static_cast<std::size_t>(n_) * n_, Mat::Zero(p_, p_));
  ext.v2.assign(n_, Mat::Zero(p_, p_));

  // S0/S1/S2: sums over active events of e^{-g u}, u e^{-g u}, u^2 e^{-g u}
  Vec S0 = Vec::Zero(n_), S1 = Vec::Zero(n_), S2 = Vec::Zero(n_);
  for (const auto& [node, age] : history_) {
    const double e = std::exp(-gamma * age);
    S0[node] += e;
    S1[node] += age * e;
    S2[node] += age * age * e;
  }

  double K[3], J[3];
  for (const Cell& cell : cells_) {
    const double dt = cell.t1 - cell.t0;
    if (dt > 0.0) {
      exp_moments(gamma, dt, K);
      exp_moments(2.0 * gamma, dt, J);
      const auto nu_seg = nu.row(cell.seg).transpose();
      const Mat& x_seg = segment_x_[cell.seg];

      ext.base.V.noalias() += nu_seg.cwiseProduct(nu_seg) * dt;
      ext.base.baseline_int.noalias() += nu_seg * dt;
      ext.base.G.noalias() += (nu_seg * K[0]) * S0.transpose();
      ext.base.excite_int.noalias() += S0 * K[0];

      // quadratic in the excitation bundle: e^{-2 g tau} polynomial moments
      const Mat outer00 = S0 * S0.transpose();
      const Mat outer01 = S0 * S1.transpose();
      ext.base.Gamma.noalias() += outer00 * J[0];
      // w_j wd_k   = -(S0_j S1_k J0 + S0_j S0_k J1)
      ext.Gamma_d.noalias() -= outer01 * J[0] + outer00 * J[1];
      // wd_j wd_k  = S1_j S1_k J0 + (S1_j S0_k + S0_j S1_k) J1 + S0_j S0_k J2
      ext.Gamma_dd.noalias() += (S1 * S1.transpose()) * J[0] +
                                (S1 * S0.transpose() + outer01) * J[1] + outer00 * J[2];
      // w_j wdd_k  = S0_j (S2_k J0 + 2 S1_k J1 + S0_k J2)
      ext.Gamma_e.noalias() += S0 * (S2 * J[0] + 2.0 * S1 * J[1] + S0 * J[2]).transpose();

      // nu-weighted families
      ext.Gd.noalias() -= nu_seg * (S1 * K[0] + S0 * K[1]).transpose();
      ext.Gdd.noalias() += nu_seg * (S2 * K[0] + 2.0 * S1 * K[1] + S0 * K[2]).transpose();

      for (int q = 0; q < p_; ++q) {
        const Vec xq_nu = x_seg.col(q).cwiseProduct(nu_seg);
        ext.V1.col(q).noalias() += xq_nu.cwiseProduct(nu_seg) * dt;
        ext.G1[q].noalias() += (xq_nu * K[0]) * S0.transpose();
        ext.G1d[q].noalias() -= xq_nu * (S1 * K[0] + S0 * K[1]).transpose();
      }
      if (p_ > 0) {
        for (int i = 0; i < n_; ++i) {
          const Vec xi = x_seg.row(i).transpose();
          const Mat xx = xi * xi.transpose();
          const double nu2 = nu(cell.seg, i) * nu(cell.seg, i);
          ext.V2[i].noalias() += xx * (nu2 * dt);
          for (int j = 0; j < n_; ++j)
            ext.G2[static_cast<std::size_t>(i) * n_ + j].noalias() +=
                xx * (nu(cell.seg, i) * S0[j] * K[0]);
        }
      }

      // advance the bundle to the cell end
      const double decay = std::exp(-gamma * dt);
      const Vec S0_old = S0;
      S2 = decay * (S2 + 2.0 * dt * S1 + dt * dt * S0_old);
      S1 = decay * (S1 + dt * S0_old);
      S0 = decay * S0_old;
    }

    for (std::size_t e = 0; e < cell.events.size(); ++e) {
      const int i = cell.events[e];
      const int seg = cell.event_segs[e];
      ext.base.Acount.row(i) += S0.transpose();
      ext.Ad.row(i) -= S1.transpose();
      ext.Add.row(i) += S2.transpose();
      const double nui = nu(seg, i);
      ext.base.v[i] += nui;
      ext.base.event_count[i] += 1.0;
      if (p_ > 0) {
        const Vec xi = segment_x_[seg].row(i).transpose();
        ext.v1.row(i) += (xi * nui).transpose();
        ext.v2[i].noalias() += (xi * xi.transpose()) * nui;
      }
    }
    for (int j : cell.expiries) {
      S0[j] = std::max(0.0, S0[j] - expA);
      S1[j] = std::max(0.0, S1[j] - A * expA);
      S2[j] = std::max(0.0, S2[j] - A * A * expA);
    }
    for (int i : cell.events) S0[i] += 1.0;
  }
  return ext;
}

SuffStats compute_stats(const EventLog& events, const CovariateField& covariates,
                        const Theta& theta, Window window, double horizon_A) {
  return StatsBuilder(events, covariates, window, horizon_A).stats(theta);
}

ExtendedStats compute_extended_stats(const EventLog& events, const CovariateField& covariates,
                                     const Theta& theta, Window window, double horizon_A) {
  return StatsBuilder(events, covariates, window, horizon_A).extended(theta);
}

double ls_value(const SuffStats& stats, const Eigen::Ref<const Vec>& c, double a, int i) {
  if (c.size() != stats.n()) throw std::invalid_argument("ls_value: row dimension mismatch");
  if (i < 0 || i >= stats.n()) throw std::invalid_argument("ls_value: bad node index");
  return a * a * stats.V[i] + c.dot(stats.Gamma * c) + 2.0 * a * c.dot(stats.G.row(i)) -
         2.0 * a * stats.v[i] - 2.0 * c.dot(stats.Acount.row(i));
}

double ls_total(const SuffStats& stats, const Mat& C, const Vec& alpha) {
  const int n = stats.n();
  if (C.rows() != n || C.cols() != n || alpha.size() != n)
    throw std::invalid_argument("ls_total: dimension mismatch");
  const double quad_alpha = alpha.cwiseProduct(stats.V).dot(alpha);
  const double trace_cgc = (C * stats.Gamma).cwiseProduct(C).sum();
  const double cross = 2.0 * alpha.dot((C.cwiseProduct(stats.G)).rowwise().sum());
  const double lin = -2.0 * alpha.dot(stats.v) - 2.0 * C.cwiseProduct(stats.Acount).sum();
  return quad_alpha + trace_cgc + cross + lin;
}

PsdSqrt psd_sqrt(const Mat& gamma, double rank_tol) {
  const int n = static_cast<int>(gamma.rows());
  if (gamma.cols() != n) throw std::invalid_argument("psd_sqrt: matrix must be square");
  if (n > 0 && (gamma - gamma.transpose()).cwiseAbs().maxCoeff() >
                   1e-10 * std::max(1.0, gamma.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("psd_sqrt: matrix is not symmetric");

  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (gamma + gamma.transpose()));
  const Vec& lam = eig.eigenvalues();
  const double lam_max = n > 0 ? std::max(0.0, lam.maxCoeff()) : 0.0;
  const double cut = rank_tol * std::max(lam_max, 0.0);

  PsdSqrt out;
  Vec half_diag = Vec::Zero(n), inv_diag = Vec::Zero(n);
  for (int k = 0; k < n; ++k) {
    if (lam[k] > cut && lam[k] > 0.0) {
      half_diag[k] = std::sqrt(lam[k]);
      inv_diag[k] = 1.0 / half_diag[k];
      ++out.rank;
    }
  }
  out.half = eig.eigenvectors() * half_diag.asDiagonal() * eig.eigenvectors().transpose();
  out.inv_half = eig.eigenvectors() * inv_diag.asDiagonal() * eig.eigenvectors().transpose();
  return out;
}

std::string stats_cache_key(const std::string& data_digest, const Theta& theta, Window window) {
  std::ostringstream key;
  key << data_digest << "|g=" << format_double(theta.gamma) << "|b=";
  for (int q = 0; q < theta.p(); ++q) key << format_double(theta.beta[q]) << (q + 1 < theta.p() ? "," : "");
  key << "|w=" << format_double(window.t0) << ":" << format_double(window.t1);
  return digest_hex(key.str());
}

namespace {
nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}
Mat mat_from_json(const nlohmann::json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  return m;
}
Vec vec_from_json(const nlohmann::json& j) {
  Vec v(j.size());
  for (std::size_t k = 0; k < j.size(); ++k) v[k] = j[k].get<double>();
  return v;
}
nlohmann::json vec_to_json(const Vec& v) {
  nlohmann::json out = nlohmann::json::array();
  for (int k = 0; k < v.size(); ++k) out.push_back(v[k]);
  return out;
}
}  // namespace

std::string suffstats_to_json(const SuffStats& stats) {
  nlohmann::json j;
  j["beta"] = vec_to_json(stats.theta.beta);
  j["gamma"] = stats.theta.gamma;
  j["window"] = {stats.window.t0, stats.window.t1};
  j["horizon_A"] = stats.horizon_A;
  j["V"] = vec_to_json(stats.V);
  j["Gamma"] = mat_to_json(stats.Gamma);
  j["G"] = mat_to_json(stats.G);
  j["A"] = mat_to_json(stats.Acount);
  j["v"] = vec_to_json(stats.v);
  j["baseline_int"] = vec_to_json(stats.baseline_int);
  j["excite_int"] = vec_to_json(stats.excite_int);
  j["event_count"] = vec_to_json(stats.event_count);
  return j.dump();
}

SuffStats suffstats_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  SuffStats stats;
  stats.theta.beta = vec_from_json(j.at("beta"));
  stats.theta.gamma = j.at("gamma").get<double>();
  stats.window = {j.at("window")[0].get<double>(), j.at("window")[1].get<double>()};
  stats.horizon_A = j.at("horizon_A").get<double>();
  stats.V = vec_from_json(j.at("V"));
  stats.Gamma = mat_from_json(j.at("Gamma"));
  stats.G = mat_from_json(j.at("G"));
  stats.Acount = mat_from_json(j.at("A"));
  stats.v = vec_from_json(j.at("v"));
  stats.baseline_int = vec_from_json(j.at("baseline_int"));
  stats.excite_int = vec_from_json(j.at("excite_int"));
  stats.event_count = vec_from_json(j.at("event_count"));
  return stats;
}

}  // namespace hawkesnet
