#include <doctest.h>

#include <cmath>

#include "hawkesnet/rng.hpp"
#include "hawkesnet/suffstats.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace hawkesnet;

TEST_CASE("excitation path recursion") {
  SUBCASE("no events -> identically zero") {
    const ExcitationPath path = excitation_path({}, 1.1, 100.0);
    CHECK(path.value_before(3.0) == 0.0);
  }
  SUBCASE("two events at 1 and 2") {
    const ExcitationPath path = excitation_path({1.0, 2.0}, 1.1, 100.0);
    CHECK(path.pre_jump[0] == 0.0);
    CHECK(path.pre_jump[1] == doctest::Approx(std::exp(-1.1)).epsilon(1e-14));
    const double expected = (std::exp(-1.1) + 1.0) * std::exp(-1.1);
    CHECK(path.value_before(3.0) == doctest::Approx(expected).epsilon(1e-13));
  }
  SUBCASE("truncation removes old events") {
    const ExcitationPath path = excitation_path({1.0}, 1.1, 2.0);
    CHECK(path.value_before(3.0) == doctest::Approx(std::exp(-2.2)));
    CHECK(path.value_before(3.2) == 0.0);
  }
}

namespace {
Theta random_theta(RngStream& rng, int p) {
  Theta theta;
  theta.beta = Vec(p);
  for (int q = 0; q < p; ++q) theta.beta[q] = rng.uniform(-1.0, 1.5);
  theta.gamma = rng.uniform(0.6, 2.0);
  return theta;
}
}  // namespace

TEST_CASE("sufficient statistics match the quadrature oracle") {
  // the module's master correctness property; instances mix truncation
  // horizons that do and do not bind within the window
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto inst = testutil::random_instance(seed, 3, 5.0, 4, 1, 6.0);
    RngStream rng(900 + seed);
    const Theta theta = random_theta(rng, 1);
    const double A = (seed % 2 == 0) ? 2.5 : KernelSpec::default_horizon(theta.gamma);
    const SuffStats stats =
        compute_stats(inst.events, inst.covariates, theta, {0.0, 5.0}, A);
    const auto raw = oracle::raw_stats(inst.events, inst.covariates, theta, {0.0, 5.0}, A);

    CHECK(testutil::max_rel_err(stats.V, raw.V) < 1e-8);
    CHECK(testutil::max_rel_err(stats.Gamma, raw.Gamma) < 1e-8);
    CHECK(testutil::max_rel_err(stats.G, raw.G) < 1e-8);
    CHECK(testutil::max_rel_err(stats.Acount, raw.A) < 1e-8);
    CHECK(testutil::max_rel_err(stats.v, raw.v) < 1e-8);
  }
}

TEST_CASE("stats of an empty process are baseline-only") {
  EventLog events;
  events.horizon = 5.0;
  events.times.assign(3, {});
  const auto inst = testutil::random_instance(3, 3, 5.0, 4, 1);
  const Theta theta{Vec::Ones(1), 1.1};
  const SuffStats stats = compute_stats(events, inst.covariates, theta, {0.0, 5.0}, 50.0);
  CHECK(stats.Gamma.cwiseAbs().maxCoeff() == 0.0);
  CHECK(stats.G.cwiseAbs().maxCoeff() == 0.0);
  CHECK(stats.Acount.cwiseAbs().maxCoeff() == 0.0);
  CHECK(stats.v.cwiseAbs().maxCoeff() == 0.0);
  CHECK((stats.V.array() > 0.0).all());
}

TEST_CASE("a node without events zeroes its Gamma row and column") {
  auto inst = testutil::random_instance(5, 3, 5.0, 4, 1, 6.0);
  inst.events.times[1].clear();
  const Theta theta{Vec::Ones(1), 1.1};
  const SuffStats stats = compute_stats(inst.events, inst.covariates, theta, {0.0, 5.0}, 50.0);
  CHECK(stats.Gamma.row(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(stats.Gamma.col(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("Gamma is positive semi-definite") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const auto inst = testutil::random_instance(seed, 4, 6.0, 5, 1, 8.0);
    const Theta theta{Vec::Ones(1) * 0.5, 1.3};
    const SuffStats stats = compute_stats(inst.events, inst.covariates, theta, {0.0, 6.0}, 40.0);
    const Eigen::SelfAdjointEigenSolver<Mat> eig(stats.Gamma);
    const double lam_max = std::max(1e-300, eig.eigenvalues().maxCoeff());
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * lam_max);
    CHECK((stats.Gamma - stats.Gamma.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("window additivity with history carry") {
  for (std::uint64_t seed = 11; seed <= 14; ++seed) {
    const auto inst = testutil::random_instance(seed, 3, 6.0, 5, 1, 9.0);
    const Theta theta{Vec::Ones(1) * 0.3, 1.1};
    const double A = 3.0;  // binding truncation exercises the carried expiries
    const SuffStats full = compute_stats(inst.events, inst.covariates, theta, {0.0, 6.0}, A);
    const SuffStats left = compute_stats(inst.events, inst.covariates, theta, {0.0, 2.7}, A);
    const SuffStats right = compute_stats(inst.events, inst.covariates, theta, {2.7, 6.0}, A);

    const double scale = std::max(1.0, full.Gamma.cwiseAbs().maxCoeff());
    CHECK((left.V + right.V - full.V).cwiseAbs().maxCoeff() < 1e-10 * scale);
    CHECK((left.Gamma + right.Gamma - full.Gamma).cwiseAbs().maxCoeff() < 1e-10 * scale);
    CHECK((left.G + right.G - full.G).cwiseAbs().maxCoeff() < 1e-10 * scale);
    CHECK((left.Acount + right.Acount - full.Acount).cwiseAbs().maxCoeff() < 1e-10 * scale);
    CHECK((left.v + right.v - full.v).cwiseAbs().maxCoeff() < 1e-10 * scale);
  }
}

TEST_CASE("ls_value against the definitional oracle") {
  const auto inst = testutil::random_instance(21, 3, 5.0, 4, 1, 7.0);
  const Theta theta{Vec::Ones(1) * 0.4, 1.2};
  const double A = KernelSpec::default_horizon(theta.gamma);
  const SuffStats stats = compute_stats(inst.events, inst.covariates, theta, {0.0, 5.0}, A);

  SUBCASE("zero parameters give zero") {
    CHECK(ls_value(stats, Vec::Zero(3), 0.0, 0) == 0.0);
  }
  SUBCASE("baseline-only algebra") {
    for (int i = 0; i < 3; ++i)
      CHECK(ls_value(stats, Vec::Zero(3), 1.0, i) ==
            doctest::Approx(stats.V[i] - 2.0 * stats.v[i]).epsilon(1e-14));
  }
  SUBCASE("random instance matches quadrature + event sum") {
    RngStream rng(77);
    for (int trial = 0; trial < 4; ++trial) {
      Vec c(3);
      for (int j = 0; j < 3; ++j) c[j] = rng.uniform(0.0, 0.8);
      const double a = rng.uniform(0.0, 2.0);
      const int i = rng.uniform_int(0, 2);
      const double direct = oracle::raw_ls(inst.events, inst.covariates, theta, {0.0, 5.0}, A, c, a, i);
      CHECK(ls_value(stats, c, a, i) ==
            doctest::Approx(direct).epsilon(1e-8));
    }
  }
}

TEST_CASE("ls_total equals the row sum and the quadrature oracle") {
  const auto inst = testutil::random_instance(31, 3, 5.0, 5, 1, 7.0);
  const Theta theta{Vec::Ones(1) * -0.2, 0.9};
  const double A = KernelSpec::default_horizon(theta.gamma);
  const SuffStats stats = compute_stats(inst.events, inst.covariates, theta, {0.0, 5.0}, A);

  RngStream rng(78);
  Mat C(3, 3);
  Vec alpha(3);
  for (int i = 0; i < 3; ++i) {
    alpha[i] = rng.uniform(0.0, 1.5);
    for (int j = 0; j < 3; ++j) C(i, j) = rng.uniform(0.0, 0.5);
  }

  SUBCASE("zero parameters") { CHECK(ls_total(stats, Mat::Zero(3, 3), Vec::Zero(3)) == 0.0); }
  SUBCASE("trace identity vs per-row values") {
    double row_sum = 0.0;
    for (int i = 0; i < 3; ++i) row_sum += ls_value(stats, C.row(i), alpha[i], i);
    CHECK(ls_total(stats, C, alpha) == doctest::Approx(row_sum).epsilon(1e-12));
  }
  SUBCASE("quadrature oracle") {
    double direct = 0.0;
    for (int i = 0; i < 3; ++i)
      direct += oracle::raw_ls(inst.events, inst.covariates, theta, {0.0, 5.0}, A,
                               C.row(i), alpha[i], i);
    CHECK(ls_total(stats, C, alpha) == doctest::Approx(direct).epsilon(1e-8));
  }
}

TEST_CASE("ls_value is jointly convex in (c, a)") {
  const auto inst = testutil::random_instance(41, 3, 5.0, 4, 1, 7.0);
  const Theta theta{Vec::Ones(1) * 0.1, 1.4};
  const SuffStats stats = compute_stats(inst.events, inst.covariates, theta, {0.0, 5.0}, 30.0);
  RngStream rng(91);
  for (int trial = 0; trial < 50; ++trial) {
    Vec c1(3), c2(3);
    for (int j = 0; j < 3; ++j) {
      c1[j] = rng.uniform(-1.0, 1.0);
      c2[j] = rng.uniform(-1.0, 1.0);
    }
    const double a1 = rng.uniform(-1.0, 2.0), a2 = rng.uniform(-1.0, 2.0);
    const int i = rng.uniform_int(0, 2);
    const double mid = ls_value(stats, ((c1 + c2) / 2.0).eval(), 0.5 * (a1 + a2), i);
    const double avg = 0.5 * (ls_value(stats, c1, a1, i) + ls_value(stats, c2, a2, i));
    CHECK(mid <= avg + 1e-10 * std::max(1.0, std::abs(avg)));
  }
}

TEST_CASE("psd_sqrt") {
  SUBCASE("identity") {
    const PsdSqrt root = psd_sqrt(Mat::Identity(3, 3));
    CHECK(root.rank == 3);
    CHECK((root.half - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((root.inv_half - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("rank-deficient diagonal uses the pseudo-inverse convention") {
    Mat g = Mat::Zero(2, 2);
    g(0, 0) = 4.0;
    const PsdSqrt root = psd_sqrt(g);
    CHECK(root.rank == 1);
    CHECK(root.half(0, 0) == doctest::Approx(2.0));
    CHECK(root.half(1, 1) == 0.0);
    CHECK(root.inv_half(0, 0) == doctest::Approx(0.5));
    CHECK(root.inv_half(1, 1) == 0.0);
  }
  SUBCASE("random Gram matrices reconstruct") {
    RngStream rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      Mat b(4, 4);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) b(i, j) = rng.normal();
      const Mat gram = b.transpose() * b;
      const PsdSqrt root = psd_sqrt(gram);
      const double lam_max = Eigen::SelfAdjointEigenSolver<Mat>(gram).eigenvalues().maxCoeff();
      CHECK((root.half * root.half - gram).cwiseAbs().maxCoeff() <= 1e-10 * lam_max);
    }
  }
  SUBCASE("asymmetric input throws") {
    Mat g(2, 2);
    g << 1.0, 0.5, 0.2, 1.0;
    CHECK_THROWS_AS(psd_sqrt(g), std::invalid_argument);
  }
}

TEST_CASE("stats JSON cache round-trip") {
  const auto inst = testutil::random_instance(51, 3, 5.0, 4, 1, 6.0);
  const Theta theta{Vec::Ones(1) * 0.2, 1.1};
  const SuffStats stats = compute_stats(inst.events, inst.covariates, theta, {0.0, 5.0}, 25.0);
  const SuffStats back = suffstats_from_json(suffstats_to_json(stats));
  CHECK((back.Gamma - stats.Gamma).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.V - stats.V).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.v - stats.v).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.theta.gamma == stats.theta.gamma);
  // distinct windows key differently
  CHECK(stats_cache_key("d", theta, {0.0, 5.0}) != stats_cache_key("d", theta, {0.0, 2.5}));
}
