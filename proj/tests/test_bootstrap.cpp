#include "covshift/bootstrap.hpp"
#include "covshift/error.hpp"
#include "covshift/simulate.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace covshift;

namespace {

BootstrapReplicates make_reps(std::vector<std::vector<double>> maxima, std::vector<std::size_t> windows) {
  BootstrapReplicates r;
  r.replicates = maxima.front().size();
  r.windows = std::move(windows);
  r.maxima = std::move(maxima);
  return r;
}

RowMatrix gaussian_rows(std::size_t count, std::size_t p, std::uint64_t seed) {
  CounterRng rng(seed);
  return draw_gaussian(Matrix::Identity(p, p), count, rng);
}

// Continuous replicate maxima for several windows, correlated through a shared draw.
BootstrapReplicates random_reps(std::size_t b, std::size_t windows, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<std::vector<double>> m(windows, std::vector<double>(b));
  std::vector<std::size_t> ns;
  for (std::size_t w = 0; w < windows; ++w) ns.push_back(10 * (w + 1));
  for (std::size_t r = 0; r < b; ++r) {
    const double shared = rng.uniform();
    for (std::size_t w = 0; w < windows; ++w) m[w][r] = shared + 0.7 * rng.uniform();
  }
  return make_reps(std::move(m), ns);
}

}  // namespace

TEST_SUITE("bootstrap") {
  TEST_CASE("constant calibration rows give constant scores") {
    RowMatrix rows(6, 3);
    for (Eigen::Index i = 0; i < 6; ++i) rows.row(i) << 1.0, 2.0, -1.0;
    const CalibrationContext ctx = build_calibration(rows, EstimatorConfig{});
    CHECK(ctx.centered.cwiseAbs().maxCoeff() == 0.0);
    const Vector expected =
        -Eigen::Map<const Vector>(ctx.theta.entries.data(), 9).cwiseQuotient(ctx.scale.sigma);
    for (const Vector& z : ctx.scores) CHECK((z - expected).cwiseAbs().maxCoeff() == 0.0);
    const WindowPlan plan = window_plan(30, {4, 7});
    for (std::uint64_t seed = 1; seed <= 5; ++seed)
      for (double a : bootstrap_replicate(ctx, plan, seed)) CHECK(a == 0.0);
  }

  TEST_CASE("two mirrored calibration rows give identical scores") {
    RowMatrix rows(2, 2);
    rows << 0.5, -1.0, -0.5, 1.0;
    const CalibrationContext ctx = build_calibration(rows, EstimatorConfig{});
    CHECK(ctx.centered.row(0) == rows.row(0));
    CHECK(ctx.centered.row(1) == rows.row(1));
    CHECK((ctx.scores[0] - ctx.scores[1]).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("scores match direct construction") {
    const RowMatrix rows = gaussian_rows(40, 5, 13);
    const CalibrationContext ctx = build_calibration(rows, EstimatorConfig{});
    CHECK(ctx.theta.symmetric);
    CHECK(ctx.centered.colwise().sum().cwiseAbs().maxCoeff() < 1e-12);
    Vector mean = Vector::Zero(25);
    for (std::size_t j = 0; j < ctx.size(); ++j) {
      Vector x = (rows.row(static_cast<Eigen::Index>(j)) - rows.colwise().mean()).transpose();
      const Vector y = ctx.theta.entries * x;
      for (int v = 0; v < 5; ++v)
        for (int u = 0; u < 5; ++u) {
          const double z = (y[u] * y[v] - ctx.theta.entries(u, v)) / ctx.scale(u, v);
          CHECK(ctx.scores[j][u + 5 * v] == doctest::Approx(z).epsilon(1e-12));
          mean[u + 5 * v] += z / 40.0;
        }
    }
    Vector lib_mean = Vector::Zero(25);
    for (const Vector& z : ctx.scores) lib_mean += z / 40.0;
    CHECK((lib_mean - mean).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("calibration needs two rows") {
    CHECK_THROWS(build_calibration(gaussian_rows(1, 3, 1), EstimatorConfig{}));
  }

  TEST_CASE("prefix-sum replicate equals direct summation") {
    const CalibrationContext ctx = build_calibration(gaussian_rows(30, 3, 21), EstimatorConfig{});
    const WindowPlan plan = window_plan(50, {5, 9, 12});
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto kappa = draw_indices(ctx.size(), 50, seed);
      const auto lib = bootstrap_replicate(ctx, plan, seed);
      const auto ref = oracle::replicate_direct(ctx, plan, kappa);
      REQUIRE(lib.size() == ref.size());
      for (std::size_t w = 0; w < lib.size(); ++w) CHECK(lib[w] == doctest::Approx(ref[w]).epsilon(1e-10));
    }
    const CalibrationContext cov = build_covariance_calibration(gaussian_rows(30, 3, 22));
    const auto kappa = draw_indices(cov.size(), 50, 3);
    const auto lib = bootstrap_replicate_from_indices(cov, plan, kappa);
    const auto ref = oracle::replicate_direct(cov, plan, kappa);
    for (std::size_t w = 0; w < lib.size(); ++w) CHECK(lib[w] == doctest::Approx(ref[w]).epsilon(1e-10));
  }

  TEST_CASE("constant index sequence cancels") {
    const CalibrationContext ctx = build_calibration(gaussian_rows(20, 4, 5), EstimatorConfig{});
    const std::vector<std::size_t> kappa(40, 7);
    // Zero up to prefix-sum rounding.
    for (double a : bootstrap_replicate_from_indices(ctx, window_plan(40, {6, 10}), kappa)) CHECK(a < 1e-12);
  }

  TEST_CASE("two central points take the larger") {
    // N = 2n + 1 is the shortest plan the window rules allow.
    const CalibrationContext ctx = build_calibration(gaussian_rows(10, 2, 8), EstimatorConfig{});
    const std::size_t n = 4;
    const WindowPlan plan = window_plan(2 * n + 1, {n});
    CHECK(plan.central_points(n) == IndexRange{n + 1, n + 2});
    const auto kappa = draw_indices(ctx.size(), plan.sample_size(), 99);
    const double lib = bootstrap_replicate_from_indices(ctx, plan, kappa)[0];
    CHECK(lib == doctest::Approx(oracle::replicate_direct(ctx, plan, kappa)[0]).epsilon(1e-12));
  }

  TEST_CASE("scalar toy replicate matches enumeration") {
    RowMatrix rows(3, 1);
    rows << 0.4, -1.1, 1.6;
    const CalibrationContext ctx = build_calibration(rows, EstimatorConfig{});
    const WindowPlan plan = window_plan(5, {2});
    // Every kappa in {0,1,2}^5 against the direct oracle.
    std::vector<std::size_t> kappa(5);
    for (int code = 0; code < 243; ++code) {
      int c = code;
      for (auto& k : kappa) {
        k = static_cast<std::size_t>(c % 3);
        c /= 3;
      }
      CHECK(bootstrap_replicate_from_indices(ctx, plan, kappa)[0] ==
            doctest::Approx(oracle::replicate_direct(ctx, plan, kappa)[0]).epsilon(1e-12));
    }
  }

  TEST_CASE("run_bootstrap contracts") {
    const CalibrationContext ctx = build_calibration(gaussian_rows(25, 3, 2), EstimatorConfig{});
    const WindowPlan plan = window_plan(60, {5, 10});
    const BootstrapReplicates one = run_bootstrap(ctx, plan, 1, 42);
    const auto direct = bootstrap_replicate(ctx, plan, split_seed(42, 1));
    CHECK(one.maxima[0][0] == direct[0]);
    CHECK(one.maxima[1][0] == direct[1]);

    const BootstrapReplicates a = run_bootstrap(ctx, plan, 300, 7, 1);
    const BootstrapReplicates b = run_bootstrap(ctx, plan, 300, 7, 1);
    const BootstrapReplicates c = run_bootstrap(ctx, plan, 300, 7, 5);
    CHECK(a.maxima == b.maxima);
    CHECK(a.maxima == c.maxima);
    CHECK(run_bootstrap(ctx, plan, 300, 8, 1).maxima != a.maxima);
    for (const auto& w : a.maxima)
      for (double v : w) CHECK(v >= 0.0);
    CHECK(a.at(10) == a.maxima[1]);

    CHECK(minimum_replicates(0.05) == 200);
    CHECK(minimum_replicates(0.03) == 334);
    CHECK_THROWS_WITH_AS(run_bootstrap(ctx, plan, 199, 1, 1, 0.05),
                         "bootstrap: B=199 is below the minimum 200 for alpha", Error);
    CHECK_NOTHROW(run_bootstrap(ctx, plan, 200, 1, 2, 0.05));
  }

  TEST_CASE("quantile examples") {
    const auto fives = make_reps({{5, 5, 5, 5}}, {3});
    CHECK(quantile_fn(fives, 3, 0.5) == 5.0);
    const auto r = make_reps({{3, 1, 4, 2}}, {3});
    CHECK(quantile_fn(r, 3, 0.25) == 3.0);
    CHECK(quantile_fn(r, 3, 0.0) == 4.0);
    CHECK(quantile_fn(r, 3, 1.0) == 1.0);
    CHECK(quantile_fn(r, 3, 0.6) == 2.0);
    for (double x : {0.0, 0.1, 0.25, 0.3, 0.5, 0.74, 0.75, 1.0}) {
      CHECK(quantile_fn(r, 3, x) == oracle::quantile_brute({3, 1, 4, 2}, x));
    }
    CHECK_THROWS(quantile_fn(r, 3, 1.5));
    CHECK_THROWS(quantile_fn(r, 4, 0.5));
  }

  TEST_CASE("quantiles with ties use strict exceedance") {
    const std::vector<double> v{1, 2, 2, 2, 3};
    const auto r = make_reps({v}, {5});
    for (double x : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) CHECK(quantile_fn(r, 5, x) == oracle::quantile_brute(v, x));
  }

  TEST_CASE("alpha star examples") {
    const auto anti = make_reps({{1, 2, 3, 4}, {4, 3, 2, 1}}, {5, 6});
    CHECK(multiplicity_correct(anti, 0.5) == 0.25);

    const auto single = random_reps(100, 1, 3);
    CHECK(multiplicity_correct(single, 0.05) == doctest::Approx(0.05));
    CHECK(multiplicity_correct(single, 0.053) == doctest::Approx(0.05));

    auto como = single;
    como.windows = {5, 6};
    como.maxima = {single.maxima[0], single.maxima[0]};
    CHECK(multiplicity_correct(como, 0.05) == multiplicity_correct(single, 0.05));
  }

  TEST_CASE("alpha star agrees with the exhaustive scan") {
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
      const auto r = random_reps(40, 1 + seed % 3, seed);
      for (double alpha : {0.05, 0.1, 0.3}) {
        CHECK(multiplicity_correct(r, alpha) == doctest::Approx(oracle::alpha_star_brute(r.maxima, alpha)));
      }
    }
    // Ties.
    const auto t = make_reps({{1, 1, 2, 2, 3, 3, 3, 4}, {2, 2, 2, 1, 1, 5, 5, 1}}, {3, 4});
    for (double alpha : {0.125, 0.25, 0.5}) {
      CHECK(multiplicity_correct(t, alpha) == doctest::Approx(oracle::alpha_star_brute(t.maxima, alpha)));
    }
  }

  TEST_CASE("threshold examples") {
    std::vector<double> v(100);
    std::iota(v.begin(), v.end(), 1.0);
    std::reverse(v.begin(), v.begin() + 50);
    const auto r = make_reps({v}, {20});
    const ThresholdSet thr = thresholds(r, 0.05);
    CHECK(thr.at(20) == 95.0);
    CHECK(thr.alpha_star == doctest::Approx(0.05));
    CHECK(thr.alpha == 0.05);
    CHECK(thr.replicates == 100);

    const ThresholdSet all = thresholds(r, 1.0);
    CHECK(all.alpha_star == 1.0);
    CHECK(all.at(20) == 1.0);

    const auto multi = random_reps(300, 3, 17);
    auto doubled = multi;
    for (auto& w : doubled.maxima)
      for (double& x : w) x *= 2.0;
    const ThresholdSet t1 = thresholds(multi, 0.05), t2 = thresholds(doubled, 0.05);
    for (std::size_t w = 0; w < 3; ++w) CHECK(t2.windows[w].threshold == 2.0 * t1.windows[w].threshold);
    CHECK(t1.window_sizes() == std::vector<std::size_t>{10, 20, 30});
  }

  TEST_CASE("self-consistency on real replicates") {
    const CalibrationContext ctx = build_calibration(gaussian_rows(40, 4, 31), EstimatorConfig{});
    const WindowPlan plan = window_plan(120, {10, 20, 30});
    const BootstrapReplicates reps = run_bootstrap(ctx, plan, 400, 3, 0, 0.05);
    const ThresholdSet thr = thresholds(reps, 0.05);
    CHECK(thr.alpha_star <= 0.05);
    CHECK(joint_exceedances(reps, thr) <= 20);
    for (std::size_t n : plan.windows()) {
      double prev = quantile_fn(reps, n, 0.0);
      for (int k = 1; k <= 100; ++k) {
        const double q = quantile_fn(reps, n, k / 100.0);
        CHECK(q <= prev);
        prev = q;
      }
    }
  }
}
