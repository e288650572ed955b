#include "covshift/error.hpp"
#include "covshift/estimation.hpp"
#include "covshift/rng.hpp"
#include "covshift/simulate.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace covshift;

namespace {

CovMatrix cov_of(const Matrix& m) { return CovMatrix{m, 0}; }

using Rows = std::vector<std::vector<double>>;

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

PrecisionEstimate est_of(const Matrix& m, bool symmetric = true) {
  PrecisionEstimate e;
  e.entries = m;
  e.symmetric = symmetric;
  return e;
}

// Random well-conditioned covariance: sample second moment of 3p Gaussian rows.
Matrix random_cov(std::size_t p, std::uint64_t seed) {
  CounterRng rng(seed);
  const RowMatrix x = draw_gaussian(Matrix::Identity(p, p), 3 * p, rng);
  return Matrix(x.transpose() * x) / static_cast<double>(3 * p);
}

}  // namespace

TEST_SUITE("estimation") {
  TEST_CASE("empirical covariance examples") {
    CHECK(max_abs(empirical_covariance(Rows{{1.0, 2.0}}).entries - mat2(1, 2, 2, 4)) == 0.0);
    CHECK(max_abs(empirical_covariance(Rows{{0.0, 0.0}, {0.0, 0.0}}).entries) == 0.0);
    const CovMatrix c = empirical_covariance(Rows{{1.0, 0.0}, {0.0, 1.0}});
    CHECK(max_abs(c.entries - mat2(0.5, 0, 0, 0.5)) == 0.0);
    CHECK(c.sample_size == 2);
    CHECK_THROWS_WITH(empirical_covariance(Rows{}), "empty window");
    CHECK_THROWS_WITH(empirical_covariance(Rows{{1.0, 2.0}, {3.0}}), "dimension mismatch");
  }

  TEST_CASE("glasso on a diagonal input matches the closed form") {
    Matrix s = Matrix::Zero(4, 4);
    s.diagonal() << 0.5, 1.0, 2.0, 3.5;
    for (double lambda : {0.0, 0.1, 0.7}) {
      const PrecisionEstimate th = graphical_lasso(cov_of(s), lambda);
      for (int i = 0; i < 4; ++i) {
        CHECK(th.entries(i, i) == doctest::Approx(1.0 / (s(i, i) + lambda)).epsilon(1e-10));
        for (int j = 0; j < 4; ++j)
          if (i != j) CHECK(th.entries(i, j) == 0.0);
      }
      CHECK(oracle::kkt_violation(s, th.entries, lambda, true) < 1e-8);
    }
  }

  TEST_CASE("glasso with lambda 0 inverts a 2x2 covariance") {
    const Matrix s = mat2(2.0, 0.6, 0.6, 1.0);
    const Matrix inv = mat2(1.0, -0.6, -0.6, 2.0) / (2.0 - 0.36);
    const PrecisionEstimate th = graphical_lasso(cov_of(s), 0.0);
    CHECK(max_abs(th.entries - inv) < 1e-6);
  }

  TEST_CASE("glasso zeroes the off-diagonal when |S12| < lambda") {
    const Matrix s = mat2(1.2, 0.15, 0.15, 0.8);
    const double lambda = 0.2;
    const PrecisionEstimate th = graphical_lasso(cov_of(s), lambda);
    CHECK(th.entries(0, 1) == 0.0);
    CHECK(th.entries(1, 0) == 0.0);
    const Matrix brute = oracle::brute_glasso_2x2(s, lambda);
    CHECK(std::abs(brute(0, 1)) < 1e-6);
    CHECK(max_abs(brute - th.entries) < 1e-6);
    CHECK(oracle::kkt_violation(s, th.entries, lambda, true) < 1e-8);
  }

  TEST_CASE("glasso 2x2 with a surviving off-diagonal matches brute force") {
    const Matrix s = mat2(1.0, 0.5, 0.5, 1.5);
    const double lambda = 0.1;
    const PrecisionEstimate th = graphical_lasso(cov_of(s), lambda, GlassoConfig{.tol = 1e-8});
    const Matrix brute = oracle::brute_glasso_2x2(s, lambda);
    CHECK(max_abs(brute - th.entries) < 1e-5);
    CHECK(th.entries(0, 1) != 0.0);
  }

  TEST_CASE("glasso KKT and objective on random inputs") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const Matrix s = random_cov(8, seed);
      GlassoConfig cfg;
      cfg.track_objective = true;
      const Matrix pen = uniform_penalty(8, 0.15, true);
      const GlassoFit fit = graphical_lasso_fit(cov_of(s), pen, cfg);
      CHECK(oracle::kkt_violation(s, fit.estimate.entries, 0.15, true) < 1e-4);
      CHECK(glasso_kkt_residual(cov_of(s), fit.estimate.entries, pen) ==
            doctest::Approx(oracle::kkt_violation(s, fit.estimate.entries, 0.15, true)).epsilon(1e-6));
      for (std::size_t k = 1; k < fit.objective.size(); ++k) {
        CHECK(fit.objective[k] <= fit.objective[k - 1] + 1e-9);
      }
    }
  }

  TEST_CASE("glasso with an unpenalized diagonal satisfies its own KKT system") {
    const Matrix s = random_cov(6, 99);
    GlassoConfig cfg;
    cfg.penalize_diagonal = false;
    const PrecisionEstimate th = graphical_lasso(cov_of(s), 0.2, cfg);
    CHECK(oracle::kkt_violation(s, th.entries, 0.2, false) < 1e-4);
    for (int i = 0; i < 6; ++i) {
      CHECK(oracle::inverse_lu(th.entries)(i, i) == doctest::Approx(s(i, i)).epsilon(1e-3));
    }
  }

  TEST_CASE("glasso rejects a singular unpenalized problem") {
    const Matrix s = mat2(1.0, 1.0, 1.0, 1.0);
    CHECK_THROWS_WITH(graphical_lasso(cov_of(s), 0.0), "unpenalized MLE undefined");
    CHECK_THROWS_AS(graphical_lasso(cov_of(s), -1.0), Error);
  }

  TEST_CASE("glasso warm start reaches the same optimum") {
    const Matrix s1 = random_cov(7, 3);
    const Matrix s2 = 0.95 * s1 + 0.05 * random_cov(7, 4);
    const Matrix pen = uniform_penalty(7, 0.1, true);
    GlassoConfig cfg;
    cfg.tol = 1e-7;
    const GlassoFit first = graphical_lasso_fit(cov_of(s1), pen, cfg);
    const GlassoFit warm = graphical_lasso_fit(cov_of(s2), pen, cfg, &first);
    const GlassoFit cold = graphical_lasso_fit(cov_of(s2), pen, cfg);
    CHECK(max_abs(warm.estimate.entries - cold.estimate.entries) < 1e-4);
  }

  TEST_CASE("adaptive glasso stays positive-definite and sparse where the first pass is") {
    const Matrix s = random_cov(6, 8);
    const PrecisionEstimate a = adaptive_graphical_lasso(cov_of(s), 0.1);
    Eigen::SelfAdjointEigenSolver<Matrix> es(a.entries);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    CHECK(a.method == Method::AdaptiveGraphicalLasso);
  }

  TEST_CASE("nodewise lasso on an orthogonal design") {
    RowMatrix x(4, 2);
    x << 1, 1, 1, -1, -1, 1, -1, -1;
    x.col(1) *= 2.0;
    const PrecisionEstimate th = nodewise_lasso(x, 0.1);
    CHECK_FALSE(th.symmetric);
    CHECK(th.entries(0, 1) == 0.0);
    CHECK(th.entries(1, 0) == 0.0);
    CHECK(th.entries(0, 0) == doctest::Approx(1.0));
    CHECK(th.entries(1, 1) == doctest::Approx(0.25));
  }

  TEST_CASE("nodewise lasso with a dominating penalty is diagonal") {
    CounterRng rng(21);
    Matrix sig = Matrix::Identity(4, 4);
    sig(0, 1) = sig(1, 0) = 0.5;
    const RowMatrix x = draw_gaussian(sig, 50, rng);
    const Matrix g = Matrix(x.transpose() * x) / 50.0;
    double off = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        if (i != j) off = std::max(off, std::abs(g(i, j)));
    const PrecisionEstimate th = nodewise_lasso(x, off);
    for (int i = 0; i < 4; ++i) {
      // gamma = 0 leaves tau^2 = G_jj.
      CHECK(th.entries(i, i) == doctest::Approx(1.0 / g(i, i)));
      for (int j = 0; j < 4; ++j)
        if (i != j) CHECK(th.entries(i, j) == 0.0);
    }
  }

  TEST_CASE("nodewise lasso recovers the identity from a large sample") {
    CounterRng rng(2024);
    const RowMatrix x = draw_gaussian(Matrix::Identity(5, 5), 2000, rng);
    const PrecisionEstimate th = nodewise_lasso(x, default_lambda(5, 2000));
    CHECK(max_abs(th.entries - Matrix::Identity(5, 5)) < 0.15);
  }

  TEST_CASE("nodewise lasso flags degenerate columns") {
    RowMatrix x(3, 2);
    x << 1, 0, 2, 0, 3, 0;
    CHECK_THROWS_WITH(nodewise_lasso(x, 0.1), "degenerate residual variance, column 2");
  }

  TEST_CASE("desparsify examples") {
    const Matrix s = random_cov(4, 5);
    const Matrix inv = oracle::inverse_lu(s);
    CHECK(max_abs(desparsify(inv, s).entries - inv) < 1e-8);
    CHECK(max_abs(desparsify(Matrix::Identity(3, 3), Matrix::Identity(3, 3)).entries -
                  Matrix::Identity(3, 3)) == 0.0);
    CHECK(max_abs(desparsify(Matrix::Identity(2, 2), 2.0 * Matrix::Identity(2, 2)).entries) == 0.0);
    const Matrix theta = random_cov(4, 6);
    const Matrix t = desparsify(theta, s).entries;
    CHECK(max_abs(t - oracle::desparsified(theta, s)) < 1e-12);
    CHECK(t == t.transpose());
    CHECK_THROWS(desparsify(Matrix::Identity(2, 2), Matrix::Identity(3, 3)));
  }

  TEST_CASE("threshold_symmetrize examples") {
    DesparsifiedEstimate t{mat2(1.0, 0.01, 0.01, 1.0)};
    CHECK(max_abs(threshold_symmetrize(t, 0.05).entries - Matrix::Identity(2, 2)) == 0.0);
    DesparsifiedEstimate k{mat2(1.0, 0.2, 0.2, 1.0)};
    CHECK(threshold_symmetrize(k, 0.1).entries(0, 1) == 0.2);
    CHECK(max_abs(threshold_symmetrize(k, 0.0).entries - k.entries) == 0.0);

    // Indefinite input gets a diagonal shift.
    DesparsifiedEstimate bad{mat2(1.0, 2.0, 2.0, 1.0)};
    const PrecisionEstimate fixed = threshold_symmetrize(bad, 0.0);
    CHECK(fixed.pd_shift > 1.0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(fixed.entries);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    // Smallest eigenvalue is -1; the shift is the next whole bump above it.
    CHECK(fixed.pd_shift <= 1.0 + 2e-6);
  }

  TEST_CASE("score_scale examples") {
    const ScoreScale id = score_scale(est_of(Matrix::Identity(3, 3)));
    for (std::size_t u = 0; u < 3; ++u)
      for (std::size_t v = 0; v < 3; ++v)
        CHECK(id(u, v) * id(u, v) == doctest::Approx(u == v ? 2.0 : 1.0));
    const ScoreScale d = score_scale(est_of(mat2(2.0, 0.0, 0.0, 0.5)));
    CHECK(d(0, 0) * d(0, 0) == doctest::Approx(8.0));
    CHECK(d(0, 1) * d(0, 1) == doctest::Approx(1.0));
    CHECK(d(1, 1) * d(1, 1) == doctest::Approx(0.5));
    CHECK(d.sigma[1] == d(1, 0));  // column-stacked: u + v p

    Matrix z = Matrix::Identity(3, 3);
    z(2, 2) = 0.0;
    const ScoreScale fl = score_scale(est_of(z), 1e-6);
    CHECK(fl(2, 2) == 1e-6);
    CHECK(fl(0, 2) == 1e-6);
    CHECK(fl(0, 0) == doctest::Approx(std::sqrt(2.0)));

    CHECK_THROWS_WITH(score_scale(est_of(mat2(1, 0.3, 0.1, 1), false)),
                      "plug-in requires symmetric estimate");
  }

  TEST_CASE("score_matrix examples") {
    const PrecisionEstimate id = est_of(Matrix::Identity(3, 3));
    CHECK(max_abs(score_matrix(id, Vector::Zero(3)).entries + Matrix::Identity(3, 3)) == 0.0);
    Vector e1 = Vector::Zero(3);
    e1[0] = 1.0;
    CHECK(max_abs(score_matrix(id, e1).entries - (e1 * e1.transpose() - Matrix::Identity(3, 3))) == 0.0);
    Vector x(2);
    x << 1.0, 1.0;
    CHECK(max_abs(score_matrix(est_of(mat2(2, 0, 0, 1)), x).entries - mat2(2, 2, 2, 0)) == 0.0);
    CHECK_THROWS(score_matrix(id, x));
  }

  TEST_CASE("scores average to zero at the true precision") {
    Matrix sig = Matrix::Identity(3, 3);
    sig(0, 1) = sig(1, 0) = 0.4;
    const Matrix theta = oracle::inverse_lu(sig);
    CounterRng rng(77);
    const RowMatrix x = draw_gaussian(sig, 40000, rng);
    Matrix mean = Matrix::Zero(3, 3);
    for (Eigen::Index i = 0; i < x.rows(); ++i) mean += score_matrix(est_of(theta), x.row(i).transpose()).entries;
    mean /= static_cast<double>(x.rows());
    CHECK(max_abs(mean) < 0.06);
  }

  TEST_CASE("residual diagnostic examples") {
    const Matrix s = random_cov(4, 12);
    const Matrix inv = oracle::inverse_lu(s);
    const DesparsifiedEstimate t = desparsify(inv, s);
    CHECK(residual_diagnostic(t, est_of(inv), cov_of(s), cov_of(s)) < 1e-8);
    CHECK(residual_diagnostic(DesparsifiedEstimate{inv}, est_of(inv), cov_of(s), cov_of(s)) == 0.0);

    const Matrix th = mat2(1.5, -0.2, -0.2, 0.9);
    const Matrix sh = mat2(0.8, 0.1, 0.1, 1.3);
    const Matrix ss = mat2(0.7, 0.0, 0.0, 1.1);
    const Matrix tt = mat2(1.1, 0.05, 0.05, 0.7);
    // Entry by entry: Th - Th (Sh - Ss) Th.
    double expected = 0.0;
    const Matrix d = sh - ss;
    for (int u = 0; u < 2; ++u)
      for (int v = 0; v < 2; ++v) {
        double quad = 0.0;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) quad += th(u, a) * d(a, b) * th(b, v);
        expected = std::max(expected, std::abs(tt(u, v) - (th(u, v) - quad)));
      }
    CHECK(residual_diagnostic(DesparsifiedEstimate{tt}, est_of(th), cov_of(sh), cov_of(ss)) ==
          doctest::Approx(expected).epsilon(1e-14));
  }

  TEST_CASE("concentration radius") {
    // p = e gives log p = 1: 2 ((2)/4 + sqrt(4/4)) = 3.
    CHECK(covariance_concentration_radius(1, 10, 0.0, 1.0) == 0.0);
    const double r = covariance_concentration_radius(3, 4, 0.0, 1.0);
    const double lp = std::log(3.0);
    CHECK(r == doctest::Approx(2.0 * (2.0 * lp / 4.0 + std::sqrt(4.0 * lp / 4.0))));
    CHECK(covariance_concentration_radius(10, 200, 1.0, 1.0) <
          covariance_concentration_radius(10, 100, 1.0, 1.0));
    CHECK_THROWS(covariance_concentration_radius(10, 0, 1.0, 1.0));
  }

  TEST_CASE("method names round-trip") {
    for (Method m : {Method::GraphicalLasso, Method::AdaptiveGraphicalLasso, Method::NodeWise,
                     Method::NodeWiseThresholded, Method::ExactInverse}) {
      CHECK(parse_method(to_string(m)) == m);
    }
    CHECK_THROWS(parse_method("bogus"));
  }
}
