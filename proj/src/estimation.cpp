#include "covshift/estimation.hpp"

#include "covshift/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace covshift {

namespace {

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    std::ostringstream os;
    os << "dimension mismatch in " << what << ": " << a << " vs " << b;
    throw data_error(os.str());
  }
}

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    std::ostringstream os;
    os << "dimension mismatch in " << what << ": matrix is " << m.rows() << "x" << m.cols();
    throw data_error(os.str());
  }
}

// Theta assembled column by column from the solver state, then symmetrized.
Matrix theta_from_state(const Matrix& w, const Matrix& beta) {
  const Eigen::Index p = w.rows();
  Matrix theta = Matrix::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double quad = 0.0;
    for (Eigen::Index k = 0; k < p; ++k) {
      if (k != j) quad += w(k, j) * beta(k, j);
    }
    const double denom = w(j, j) - quad;
    const double tjj = 1.0 / denom;
    theta(j, j) = tjj;
    for (Eigen::Index k = 0; k < p; ++k) {
      if (k != j) theta(k, j) = -beta(k, j) * tjj;
    }
  }
  return 0.5 * (theta + theta.transpose());
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

// One full glasso solve.  A diverging inner lasso is reported rather than
// thrown so a warm start can be retried cold.
enum class SolveStatus { Converged, NotConverged, Diverged };

SolveStatus glasso_solve(const CovMatrix& s, const Matrix& penalty, const GlassoConfig& cfg,
                         GlassoFit& fit, double& last_change) {
  const Matrix& S = s.entries;
  const Eigen::Index p = S.rows();
  Matrix& W = fit.w;
  Matrix& B = fit.beta;

  for (Eigen::Index i = 0; i < p; ++i) W(i, i) = S(i, i) + penalty(i, i);

  double mean_offdiag = 0.0;
  if (p > 1) {
    for (Eigen::Index v = 0; v < p; ++v)
      for (Eigen::Index u = 0; u < p; ++u)
        if (u != v) mean_offdiag += std::abs(S(u, v));
    mean_offdiag /= static_cast<double>(p * (p - 1));
  }
  const double threshold = cfg.tol * mean_offdiag;

  Vector wb(p);
  fit.objective.clear();
  last_change = 0.0;
  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    double change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      // B(j, j) stays zero, so this is W11 * beta on the k != j block.
      wb.noalias() = W * B.col(j);

      int pass = 0;
      for (; pass < cfg.inner_max_iter; ++pass) {
        double max_delta = 0.0;
        for (Eigen::Index k = 0; k < p; ++k) {
          if (k == j) continue;
          const double wkk = W(k, k);
          const double old = B(k, j);
          const double grad = S(k, j) - (wb[k] - wkk * old);
          const double updated = soft_threshold(grad, penalty(k, j)) / wkk;
          const double delta = updated - old;
          if (delta != 0.0) {
            B(k, j) = updated;
            wb.noalias() += W.col(k) * delta;
            max_delta = std::max(max_delta, std::abs(delta));
          }
        }
        if (!std::isfinite(max_delta) || max_delta > 1e12) return SolveStatus::Diverged;
        if (max_delta < cfg.inner_tol) break;
      }
      if (pass == cfg.inner_max_iter) return SolveStatus::Diverged;

      for (Eigen::Index k = 0; k < p; ++k) {
        if (k == j) continue;
        change += std::abs(wb[k] - W(k, j));
        W(k, j) = wb[k];
        W(j, k) = wb[k];
      }
    }
    fit.iterations = iter;
    last_change = p > 1 ? change / static_cast<double>(p * (p - 1)) : 0.0;
    if (cfg.track_objective) {
      fit.objective.push_back(glasso_objective(s, theta_from_state(W, B), penalty));
    }
    if (last_change <= threshold &&
        glasso_kkt_residual(s, theta_from_state(W, B), penalty) <= cfg.kkt_tol)
      return SolveStatus::Converged;
  }
  return SolveStatus::NotConverged;
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::GraphicalLasso: return "glasso";
    case Method::AdaptiveGraphicalLasso: return "adaptive";
    case Method::NodeWise: return "nodewise";
    case Method::NodeWiseThresholded: return "nodewise-thresholded";
    case Method::ExactInverse: return "exact-inverse";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::GraphicalLasso, Method::AdaptiveGraphicalLasso, Method::NodeWise,
                   Method::NodeWiseThresholded, Method::ExactInverse}) {
    if (to_string(m) == name) return m;
  }
  throw usage_error("unknown estimator '" + std::string(name) + "'");
}

double default_lambda(std::size_t p, std::size_t n) {
  return std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

CovMatrix empirical_covariance(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw data_error("empty window");
  const std::size_t p = rows.front().size();
  RowMatrix x(rows.size(), p);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != p) throw data_error("dimension mismatch");
    for (std::size_t j = 0; j < p; ++j) x(i, j) = rows[i][j];
  }
  return empirical_covariance(x);
}

CovMatrix empirical_covariance(const RowMatrix& rows) {
  if (rows.rows() == 0) throw data_error("empty window");
  const double n = static_cast<double>(rows.rows());
  Matrix s = Matrix::Zero(rows.cols(), rows.cols());
  s.selfadjointView<Eigen::Lower>().rankUpdate(rows.transpose(), 1.0 / n);
  s.triangularView<Eigen::StrictlyUpper>() = s.transpose();
  return CovMatrix{std::move(s), static_cast<std::size_t>(rows.rows())};
}

Matrix uniform_penalty(std::size_t p, double lambda, bool penalize_diagonal) {
  Matrix pen = Matrix::Constant(p, p, lambda);
  if (!penalize_diagonal) pen.diagonal().setZero();
  return pen;
}

GlassoFit graphical_lasso_fit(const CovMatrix& s, const Matrix& penalty, const GlassoConfig& cfg,
                              const GlassoFit* warm) {
  require_square(s.entries, "graphical_lasso");
  const Eigen::Index p = s.entries.rows();
  require_same_dim(static_cast<std::size_t>(penalty.rows()), static_cast<std::size_t>(p),
                   "graphical_lasso penalty");
  if (p == 0) throw data_error("graphical_lasso: empty covariance");
  if ((penalty.array() < 0.0).any()) throw usage_error("graphical_lasso: negative penalty");

  const double lambda = penalty.maxCoeff();
  if (lambda == 0.0) {
    Eigen::LLT<Matrix> llt(s.entries);
    if (llt.info() != Eigen::Success) throw numerical_error("unpenalized MLE undefined");
    GlassoFit fit;
    fit.w = s.entries;
    fit.estimate.entries = llt.solve(Matrix::Identity(p, p));
    fit.estimate.entries = 0.5 * (fit.estimate.entries + fit.estimate.entries.transpose());
    fit.estimate.lambda = 0.0;
    fit.beta = Matrix::Zero(p, p);
    for (Eigen::Index j = 0; j < p; ++j) {
      fit.beta.col(j) = -fit.estimate.entries.col(j) / fit.estimate.entries(j, j);
      fit.beta(j, j) = 0.0;
    }
    return fit;
  }

  GlassoFit fit;
  double last_change = 0.0;
  SolveStatus status = SolveStatus::Diverged;
  const bool usable_warm = warm != nullptr && warm->w.rows() == p && warm->beta.rows() == p &&
                           all_finite(warm->w) && all_finite(warm->beta);
  if (usable_warm) {
    fit.w = warm->w;
    fit.beta = warm->beta;
    status = glasso_solve(s, penalty, cfg, fit, last_change);
  }
  if (status == SolveStatus::Diverged) {
    fit.w = s.entries;
    fit.beta = Matrix::Zero(p, p);
    status = glasso_solve(s, penalty, cfg, fit, last_change);
  }
  if (status == SolveStatus::Diverged) {
    throw ConvergenceError(fit.iterations, last_change, "graphical lasso: inner lasso diverged");
  }
  if (status == SolveStatus::NotConverged) {
    std::ostringstream os;
    os << "graphical lasso did not converge after " << fit.iterations
       << " sweeps (last mean change " << last_change << ", KKT residual "
       << glasso_kkt_residual(s, theta_from_state(fit.w, fit.beta), penalty) << ")";
    throw ConvergenceError(fit.iterations, last_change, os.str());
  }

  fit.estimate.entries = theta_from_state(fit.w, fit.beta);
  if (!all_finite(fit.estimate.entries)) {
    throw ConvergenceError(fit.iterations, last_change, "graphical lasso produced non-finite entries");
  }
  fit.estimate.lambda = lambda;
  fit.estimate.method = Method::GraphicalLasso;
  fit.estimate.symmetric = true;
  return fit;
}

PrecisionEstimate graphical_lasso(const CovMatrix& s, double lambda, const GlassoConfig& cfg) {
  if (lambda < 0.0) throw usage_error("graphical_lasso: lambda must be >= 0");
  return graphical_lasso_fit(s, uniform_penalty(s.dim(), lambda, cfg.penalize_diagonal), cfg)
      .estimate;
}

PrecisionEstimate adaptive_graphical_lasso(const CovMatrix& s, double lambda,
                                           const GlassoConfig& cfg, double eps) {
  const PrecisionEstimate first = graphical_lasso(s, lambda, cfg);
  Matrix penalty = lambda * (first.entries.cwiseAbs().array() + eps).inverse().matrix();
  if (!cfg.penalize_diagonal) penalty.diagonal().setZero();
  PrecisionEstimate out = graphical_lasso_fit(s, penalty, cfg).estimate;
  out.lambda = lambda;
  out.method = Method::AdaptiveGraphicalLasso;
  return out;
}

double glasso_objective(const CovMatrix& s, const Matrix& theta, const Matrix& penalty) {
  Eigen::LLT<Matrix> llt(theta);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const Matrix& L = llt.matrixLLT();
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < L.rows(); ++i) logdet += 2.0 * std::log(L(i, i));
  const double trace = (theta.cwiseProduct(s.entries)).sum();
  const double l1 = (penalty.cwiseProduct(theta.cwiseAbs())).sum();
  return trace - logdet + l1;
}

double glasso_kkt_residual(const CovMatrix& s, const Matrix& theta, const Matrix& penalty) {
  const Eigen::Index p = theta.rows();
  const Matrix w = theta.ldlt().solve(Matrix::Identity(p, p));
  double worst = 0.0;
  for (Eigen::Index v = 0; v < p; ++v) {
    for (Eigen::Index u = 0; u < p; ++u) {
      const double g = s.entries(u, v) - w(u, v);
      double r;
      if (theta(u, v) == 0.0) {
        r = std::max(0.0, std::abs(g) - penalty(u, v));
      } else {
        r = std::abs(g + penalty(u, v) * (theta(u, v) > 0.0 ? 1.0 : -1.0));
      }
      worst = std::max(worst, r);
    }
  }
  return worst;
}

PrecisionEstimate nodewise_lasso(const RowMatrix& rows, double lambda, double variance_floor) {
  if (rows.rows() == 0) throw data_error("empty window");
  return nodewise_lasso(empirical_covariance(rows), lambda, variance_floor);
}

PrecisionEstimate nodewise_lasso(const CovMatrix& gram, double lambda, double variance_floor) {
  require_square(gram.entries, "nodewise_lasso");
  if (lambda < 0.0) throw usage_error("nodewise_lasso: lambda must be >= 0");
  const Matrix& G = gram.entries;
  const Eigen::Index p = G.rows();
  Matrix theta = Matrix::Zero(p, p);
  Vector gamma(p);
  Vector g_gamma(p);

  for (Eigen::Index j = 0; j < p; ++j) {
    gamma.setZero();
    g_gamma.setZero();
    for (int pass = 0; pass < 10000; ++pass) {
      double max_delta = 0.0;
      for (Eigen::Index k = 0; k < p; ++k) {
        if (k == j || G(k, k) <= 0.0) continue;
        const double old = gamma[k];
        const double r = G(k, j) - (g_gamma[k] - G(k, k) * old);
        const double updated = soft_threshold(r, lambda) / G(k, k);
        const double delta = updated - old;
        if (delta != 0.0) {
          gamma[k] = updated;
          g_gamma.noalias() += G.col(k) * delta;
          max_delta = std::max(max_delta, std::abs(delta));
        }
      }
      if (max_delta < 1e-12) break;
    }
    // (1/n)||x_j - X gamma||^2 expanded through the Gram matrix.
    const double rss = G(j, j) - 2.0 * gamma.dot(G.col(j)) + gamma.dot(g_gamma);
    const double tau2 = rss + lambda * gamma.lpNorm<1>();
    if (!(tau2 >= variance_floor)) {
      throw numerical_error("degenerate residual variance, column " + std::to_string(j + 1));
    }
    for (Eigen::Index k = 0; k < p; ++k) theta(k, j) = (k == j ? 1.0 : -gamma[k]) / tau2;
  }

  PrecisionEstimate out;
  out.entries = std::move(theta);
  out.lambda = lambda;
  out.method = Method::NodeWise;
  out.symmetric = false;
  return out;
}

DesparsifiedEstimate desparsify(const PrecisionEstimate& theta, const CovMatrix& sigma) {
  return desparsify(theta.entries, sigma.entries);
}

DesparsifiedEstimate desparsify(const Matrix& theta, const Matrix& sigma) {
  require_square(theta, "desparsify");
  require_square(sigma, "desparsify");
  require_same_dim(static_cast<std::size_t>(theta.rows()), static_cast<std::size_t>(sigma.rows()),
                   "desparsify");
  Matrix t = theta + theta.transpose();
  t.noalias() -= theta.transpose() * (sigma * theta);
  DesparsifiedEstimate out;
  out.entries = 0.5 * (t + t.transpose());
  return out;
}

PrecisionEstimate threshold_symmetrize(const DesparsifiedEstimate& t, double threshold,
                                       double pd_bump) {
  if (threshold < 0.0) throw usage_error("threshold_symmetrize: threshold must be >= 0");
  const Eigen::Index p = t.entries.rows();
  Matrix m = t.entries;
  for (Eigen::Index v = 0; v < p; ++v)
    for (Eigen::Index u = 0; u < p; ++u)
      if (u != v && std::abs(m(u, v)) <= threshold) m(u, v) = 0.0;

  constexpr double kMinEigen = 1e-10;
  auto smallest_eigen = [](const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  };

  double shift = 0.0;
  if (p > 0) {
    const double lmin = smallest_eigen(m);
    if (lmin <= kMinEigen) {
      const double maxdiag = m.diagonal().maxCoeff();
      const double step = pd_bump * (maxdiag > 0.0 ? maxdiag : 1.0);
      // Jump straight to the smallest whole number of steps, then confirm.
      double k = std::floor((kMinEigen - lmin) / step) + 1.0;
      while (smallest_eigen(m + k * step * Matrix::Identity(p, p)) <= kMinEigen) k += 1.0;
      shift = k * step;
      m.diagonal().array() += shift;
    }
  }

  PrecisionEstimate out;
  out.entries = std::move(m);
  out.lambda = threshold;
  out.method = Method::NodeWiseThresholded;
  out.symmetric = true;
  out.pd_shift = shift;
  return out;
}

ScoreScale score_scale(const PrecisionEstimate& theta, double floor) {
  if (!(floor > 0.0)) throw usage_error("score_scale: floor must be positive");
  const Matrix& t = theta.entries;
  const double scale = std::max(1.0, max_abs(t));
  if (!theta.symmetric || (t - t.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw usage_error("plug-in requires symmetric estimate");
  }
  const std::size_t p = theta.dim();
  ScoreScale out;
  out.dim = p;
  out.floor = floor;
  out.sigma.resize(static_cast<Eigen::Index>(p * p));
  for (std::size_t v = 0; v < p; ++v) {
    for (std::size_t u = 0; u < p; ++u) {
      const double var = t(u, u) * t(v, v) + t(u, v) * t(u, v);
      const double sd = var > 0.0 ? std::sqrt(var) : 0.0;
      out.sigma[static_cast<Eigen::Index>(ScoreScale::flat_index(u, v, p))] = std::max(sd, floor);
    }
  }
  return out;
}

ScoreMatrix score_matrix(const PrecisionEstimate& theta, const Vector& x) {
  require_same_dim(theta.dim(), static_cast<std::size_t>(x.size()), "score_matrix");
  const Vector y = theta.entries * x;
  ScoreMatrix out;
  out.entries = y * y.transpose() - theta.entries;
  return out;
}

double residual_diagnostic(const DesparsifiedEstimate& t, const PrecisionEstimate& theta_star,
                           const CovMatrix& sigma_hat, const CovMatrix& sigma_star) {
  const std::size_t p = t.dim();
  require_same_dim(p, theta_star.dim(), "residual_diagnostic");
  require_same_dim(p, sigma_hat.dim(), "residual_diagnostic");
  require_same_dim(p, sigma_star.dim(), "residual_diagnostic");
  const Matrix& th = theta_star.entries;
  const Matrix linear = th - th * (sigma_hat.entries - sigma_star.entries) * th;
  return max_abs(t.entries - linear);
}

double covariance_concentration_radius(std::size_t p, std::size_t n, double chi, double L) {
  if (n == 0 || p == 0 || chi < 0.0 || !(L > 0.0)) {
    throw usage_error("covariance_concentration_radius: invalid arguments");
  }
  const double logp = std::log(static_cast<double>(p));
  const double dn = static_cast<double>(n);
  return 2.0 * L * L * ((2.0 * logp + chi) / dn + std::sqrt((4.0 * logp + 2.0 * chi) / dn));
}

}  // namespace covshift
