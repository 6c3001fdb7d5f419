#include <doctest.h>

#include <cmath>

#include "hawkesnet/lasso.hpp"
#include "hawkesnet/rng.hpp"
#include "hawkesnet/simulate.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace hawkesnet;

TEST_CASE("build_xtilde block values for m = 2") {
  const Mat xt = build_xtilde(2);
  REQUIRE(xt.rows() == 3);
  const double s6_6 = std::sqrt(6.0) / 6.0, s2_2 = std::sqrt(2.0) / 2.0;
  CHECK(xt(0, 0) == doctest::Approx(s6_6));
  CHECK(xt(0, 1) == doctest::Approx(-s2_2));
  CHECK(xt(1, 0) == doctest::Approx(s6_6));
  CHECK(xt(1, 1) == doctest::Approx(s2_2));
  CHECK(xt(2, 0) == doctest::Approx(-std::sqrt(6.0) / 3.0));
  CHECK(xt(2, 1) == 0.0);
}

TEST_CASE("build_xtilde is orthonormal with zero column sums") {
  for (int m = 2; m <= 50; ++m) {
    const Mat xt = build_xtilde(m);
    CHECK(xt.rows() == (m % 2 == 0 ? 3 * m / 2 : (3 * m + 1) / 2));
    const Mat gram = xt.transpose() * xt;
    CHECK((gram - Mat::Identity(m, m)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(xt.colwise().sum().cwiseAbs().maxCoeff() <= 1e-12);
  }
  CHECK_THROWS_AS(build_xtilde(1), std::invalid_argument);
}

TEST_CASE("center_transform preserves the quadratic form") {
  RngStream rng(13);
  SUBCASE("zero response maps to zero") {
    const Mat x = Mat::Ones(4, 2);
    const CenteredData c = center_transform(Vec::Zero(4), x);
    CHECK(c.y.cwiseAbs().maxCoeff() == 0.0);
  }
  for (int trial = 0; trial < 10; ++trial) {
    const int m = rng.uniform_int(2, 9), q = rng.uniform_int(1, 4);
    Mat x(m, q);
    Vec y(m);
    for (int i = 0; i < m; ++i) {
      y[i] = rng.normal();
      for (int k = 0; k < q; ++k) x(i, k) = rng.normal();
    }
    const CenteredData c = center_transform(y, x);
    CHECK(std::abs(c.y.squaredNorm() - y.squaredNorm()) <= 1e-12 * std::max(1.0, y.squaredNorm()));
    CHECK((c.x.transpose() * c.x - x.transpose() * x).cwiseAbs().maxCoeff() <=
          1e-12 * std::max(1.0, x.squaredNorm()));
    CHECK(c.x.colwise().sum().cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(c.y.sum()) <= 1e-12);
  }
}

TEST_CASE("transformed LARS matches the coordinate-descent oracle") {
  RngStream rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const int m = rng.uniform_int(3, 30), q = rng.uniform_int(1, 8);
    Mat x(m, q);
    Vec y(m);
    for (int i = 0; i < m; ++i) {
      y[i] = rng.normal();
      for (int k = 0; k < q; ++k) x(i, k) = rng.normal();
    }
    const double lambda = rng.uniform(0.05, 2.0);
    const Vec via_lars = lars_lasso(y, x, lambda);
    const Vec via_cd = oracle::lasso_cd_reference(y, x, lambda);
    const double obj_lars = oracle::lasso_data_objective(y, x, lambda, via_lars);
    const double obj_cd = oracle::lasso_data_objective(y, x, lambda, via_cd);
    CHECK(std::abs(obj_lars - obj_cd) <= 1e-6);
  }
}

TEST_CASE("solve_quadratic_lasso") {
  SUBCASE("zero data gives zero") {
    QuadraticLassoProblem p;
    p.Q = Mat::Identity(3, 3);
    p.b = Vec::Zero(3);
    p.weights = Vec::Constant(3, 0.4);
    const LassoSolution sol = solve_quadratic_lasso(p);
    CHECK(sol.x.cwiseAbs().maxCoeff() == 0.0);
    CHECK(sol.active.empty());
  }
  SUBCASE("scalar soft threshold with non-negativity") {
    QuadraticLassoProblem p;
    p.Q = Mat::Ones(1, 1);
    p.b = Vec::Ones(1) * 2.0;
    p.weights = Vec::Ones(1) * 0.5;
    p.signs = {SignConstraint::kNonNegative};
    const LassoSolution sol = solve_quadratic_lasso(p);
    CHECK(sol.x[0] == doctest::Approx(1.5).epsilon(1e-10));
  }
  SUBCASE("random mixed problems match the enumeration oracle") {
    RngStream rng(23);
    for (int trial = 0; trial < 30; ++trial) {
      const int d = 6;
      Mat base(d + 2, d);
      for (int i = 0; i < d + 2; ++i)
        for (int k = 0; k < d; ++k) base(i, k) = rng.normal();
      QuadraticLassoProblem p;
      p.Q = base.transpose() * base;
      p.b = Vec(d);
      p.weights = Vec(d);
      std::vector<bool> nonneg(d);
      p.signs.resize(d);
      for (int k = 0; k < d; ++k) {
        p.b[k] = 2.0 * rng.normal();
        p.weights[k] = rng.uniform(0.0, 1.0);
        nonneg[k] = rng.uniform01() < 0.5;
        p.signs[k] = nonneg[k] ? SignConstraint::kNonNegative : SignConstraint::kFree;
      }
      const LassoSolution sol = solve_quadratic_lasso(p, 1e-9);
      const Vec exact = oracle::lasso_enumeration(p.Q, p.b, p.weights, nonneg);
      CHECK(lasso_objective(p, sol.x) <= lasso_objective(p, exact) + 1e-8);
      CHECK(sol.kkt_residual <= 1e-9);
      // independent re-verification of the certificate
      CHECK(lasso_kkt_residual(p, sol.x) <= 1e-9);
    }
  }
  SUBCASE("zero-diagonal coordinates never activate") {
    QuadraticLassoProblem p;
    p.Q = Mat::Zero(2, 2);
    p.Q(0, 0) = 1.0;
    p.b = Vec::Zero(2);
    p.b[0] = 1.0;
    p.weights = Vec::Constant(2, 0.1);
    const LassoSolution sol = solve_quadratic_lasso(p);
    CHECK(sol.x[1] == 0.0);
    CHECK(sol.x[0] == doctest::Approx(0.9));
  }
  SUBCASE("LARS route demands positive weights") {
    QuadraticLassoProblem p;
    p.Q = Mat::Identity(2, 2);
    p.b = Vec::Ones(2);
    p.weights = Vec::Zero(2);
    CHECK_THROWS_AS(solve_quadratic_lasso(p, 1e-8, LassoMethod::kLarsPolish),
                    std::invalid_argument);
    CHECK_NOTHROW(solve_quadratic_lasso(p, 1e-8, LassoMethod::kCoordinateDescent));
  }
}

namespace {
SuffStats stats_for_instance(std::uint64_t seed, int n, double T, double gamma) {
  const auto inst = testutil::random_instance(seed, n, T, 5, 1, 10.0);
  const Theta theta{Vec::Ones(1) * 0.3, gamma};
  return compute_stats(inst.events, inst.covariates, theta, {0.0, T},
                       KernelSpec::default_horizon(gamma));
}
}  // namespace

TEST_CASE("solve_row_problem") {
  SUBCASE("huge penalty kills excitation, closed-form alpha remains") {
    const SuffStats stats = stats_for_instance(3, 3, 6.0, 1.1);
    for (int i = 0; i < 3; ++i) {
      const RowSolution row = solve_row_problem(stats, i, 1e6);
      CHECK(row.c.cwiseAbs().maxCoeff() == 0.0);
      CHECK(row.alpha == doctest::Approx(std::max(0.0, stats.v[i] / stats.V[i])).epsilon(1e-10));
      CHECK(row.alpha >= 0.0);
    }
  }
  SUBCASE("unpenalized tiny instance matches the joint QP oracle") {
    const SuffStats stats = stats_for_instance(11, 2, 6.0, 1.0);
    const double T = stats.window.length();
    for (int i = 0; i < 2; ++i) {
      const RowSolution row = solve_row_problem(stats, i, 0.0, 0.0, 1e-10);
      // joint problem in (a, c1, c2), all non-negative
      Mat Q(3, 3);
      Q(0, 0) = stats.V[i];
      Q.block(0, 1, 1, 2) = stats.G.row(i);
      Q.block(1, 0, 2, 1) = stats.G.row(i).transpose();
      Q.block(1, 1, 2, 2) = stats.Gamma;
      Q /= T;
      Vec b(3);
      b[0] = stats.v[i] / T;
      b.tail(2) = stats.Acount.row(i).transpose() / T;
      const Vec exact = oracle::nonneg_qp_enumeration(Q, b, Vec::Zero(3));
      CHECK(row.alpha == doctest::Approx(exact[0]).epsilon(1e-6));
      CHECK(row.c[0] == doctest::Approx(exact[1]).epsilon(1e-6));
      CHECK(row.c[1] == doctest::Approx(exact[2]).epsilon(1e-6));
    }
  }
  SUBCASE("degenerate baseline integral is an error") {
    SuffStats stats = stats_for_instance(3, 3, 6.0, 1.1);
    stats.V[1] = 0.0;
    CHECK_THROWS_AS(solve_row_problem(stats, 1, 0.1), std::invalid_argument);
  }
  SUBCASE("the stability cap re-penalizes the row when it binds") {
    const SuffStats stats = stats_for_instance(19, 3, 6.0, 1.1);
    const RowSolution free_row = solve_row_problem(stats, 0, 1e-4);
    const double bound = 0.5 * free_row.c.lpNorm<1>();
    if (bound > 0.0) {
      const RowSolution capped = solve_row_problem(stats, 0, 1e-4, 0.0, 1e-8, bound);
      CHECK(capped.l1_bound_hit);
      CHECK(capped.c.lpNorm<1>() < bound + 1e-9);
    }
  }
}

TEST_CASE("row recovery of a strong true edge") {
  // one strong edge in a 3-node network; the active set must contain it in
  // at least 95 of 100 seeded replications (threshold fixed up front)
  int hits = 0;
  const int reps = 100;
  for (int r = 0; r < reps; ++r) {
    HawkesParams params;
    params.C = Mat::Zero(3, 3);
    params.C(0, 1) = 0.6;
    params.alpha = Vec::Ones(3);
    params.beta = Vec(0);
    params.kernel = KernelSpec(1.1, KernelSpec::default_horizon(1.1));
    const double T = 60.0;
    const CovariateField cov = CovariateField::empty(3, T);
    const EventLog events = simulate_hawkes(params, cov, T, 4000 + r);
    const SuffStats stats =
        compute_stats(events, cov, Theta{Vec(0), 1.1}, {0.0, T}, params.kernel.horizon);
    const RowSolution row = solve_row_problem(stats, 0, 0.08);
    if (row.c[1] > 0.0) ++hits;
  }
  CHECK(hits >= 95);
}

TEST_CASE("nodewise lasso") {
  SUBCASE("identity matrix gives empty regression with tau 1") {
    const NodewiseResult nw = nodewise_lasso(Mat::Identity(4, 4), 2, 0.3);
    CHECK(nw.v.cwiseAbs().maxCoeff() == 0.0);
    CHECK(nw.tau == doctest::Approx(1.0));
    CHECK(nw.realized_gap <= 0.3 / 1.0 + 1e-9);
  }
  SUBCASE("random matrices match the data-form coordinate-descent oracle") {
    RngStream rng(31);
    for (int trial = 0; trial < 20; ++trial) {
      const int d = 3;
      Mat s(d, d);
      for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k) s(i, k) = rng.normal();
      s = (0.5 * (s + s.transpose())).eval();
      const int j = rng.uniform_int(0, d - 1);
      const double sigma_j = 0.1;
      const NodewiseResult nw = nodewise_lasso(s, j, sigma_j);

      // reference: lasso on (y = s_col_j, X = s minus column j)
      Mat xd(d, d - 1);
      int col = 0;
      for (int k = 0; k < d; ++k)
        if (k != j) xd.col(col++) = s.col(k);
      const Vec ref = oracle::lasso_cd_reference(s.col(j), xd, sigma_j);
      const double obj_nw = oracle::lasso_data_objective(s.col(j), xd, sigma_j, nw.v);
      const double obj_ref = oracle::lasso_data_objective(s.col(j), xd, sigma_j, ref);
      CHECK(std::abs(obj_nw - obj_ref) <= 1e-8);

      // tau identity when every coordinate is penalized
      const double tau_identity =
          (s.col(j) - xd * nw.v).squaredNorm() + sigma_j * nw.v.lpNorm<1>();
      CHECK(nw.tau == doctest::Approx(tau_identity).epsilon(1e-8));

      // approximate-inverse certificate
      CHECK(nw.realized_gap <= sigma_j / nw.tau + 1e-9);
    }
  }
  SUBCASE("unpenalized coordinates reach exact stationarity") {
    RngStream rng(37);
    Mat s(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < 4; ++k) s(i, k) = rng.normal();
    s = (s * s.transpose()).eval();
    const NodewiseResult nw = nodewise_lasso(s, 3, 5.0, {0});
    const Mat s2 = s * s;
    Vec resid = s2.col(3);
    for (int k = 0; k < 3; ++k) resid -= nw.v[k] * s2.col(k);
    CHECK(std::abs(resid[0]) <= 1e-7 * std::max(1.0, s2.cwiseAbs().maxCoeff()));
    CHECK_THROWS_AS(nodewise_lasso(s, 3, -1.0), std::invalid_argument);
  }
}
