#pragma once

// Sparse precision-matrix estimation and the de-sparsified statistic pieces.
//
// Matrix-valued quantities indexed by a pair (u, v) are flattened in
// column-stacked order everywhere in the library: flat index = u + v * p.

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace covshift {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Uncentered second-moment matrix (1/n) sum x x^T of a block of rows.
struct CovMatrix {
  Matrix entries;
  std::size_t sample_size = 0;

  std::size_t dim() const { return static_cast<std::size_t>(entries.rows()); }
};

enum class Method {
  GraphicalLasso,
  AdaptiveGraphicalLasso,
  NodeWise,
  NodeWiseThresholded,
  ExactInverse,
};

std::string_view to_string(Method method);
Method parse_method(std::string_view name);

struct PrecisionEstimate {
  Matrix entries;
  double lambda = 0.0;
  Method method = Method::GraphicalLasso;
  bool symmetric = true;
  /// Diagonal shift added to restore positive-definiteness (thresholded estimates only).
  double pd_shift = 0.0;

  std::size_t dim() const { return static_cast<std::size_t>(entries.rows()); }
};

/// T = Theta + Theta^T - Theta^T Sigma Theta, stored exactly symmetric.
struct DesparsifiedEstimate {
  Matrix entries;

  std::size_t dim() const { return static_cast<std::size_t>(entries.rows()); }
};

/// Plug-in standard deviations of the score entries, column-stacked.
struct ScoreScale {
  std::size_t dim = 0;
  Vector sigma;
  double floor = 1e-8;

  static std::size_t flat_index(std::size_t u, std::size_t v, std::size_t p) { return u + v * p; }
  double operator()(std::size_t u, std::size_t v) const { return sigma[flat_index(u, v, dim)]; }
};

/// Z_uv = (Theta_u . x)(Theta_v . x) - Theta_uv for one observation x.
struct ScoreMatrix {
  Matrix entries;
};

struct GlassoConfig {
  /// Outer convergence: mean |change in W| per sweep <= tol * mean |S offdiag|.
  double tol = 1e-4;
  int max_iter = 200;
  /// Sweeps also continue until the KKT residual of the current Theta is at most this.
  double kkt_tol = 1e-4;
  /// Penalize the diagonal of Theta as in the full l1 objective.
  bool penalize_diagonal = true;
  double inner_tol = 1e-7;
  int inner_max_iter = 5000;
  /// Record the objective after every outer sweep (costs a Cholesky per sweep).
  bool track_objective = false;
};

/// Full solver state, reusable as a warm start for a nearby covariance.
struct GlassoFit {
  PrecisionEstimate estimate;
  Matrix w;     // working covariance, approximately estimate^-1
  Matrix beta;  // column j: inner lasso coefficients of node j (entry j unused)
  int iterations = 0;
  std::vector<double> objective;
};

double default_lambda(std::size_t p, std::size_t n);

CovMatrix empirical_covariance(const std::vector<std::vector<double>>& rows);
CovMatrix empirical_covariance(const RowMatrix& rows);

/// Penalty matrix with `lambda` off the diagonal and on it only when requested.
Matrix uniform_penalty(std::size_t p, double lambda, bool penalize_diagonal);

/// Block coordinate descent on columns with an inner cyclic lasso.  `penalty`
/// is an elementwise weight matrix (symmetric, non-negative).
GlassoFit graphical_lasso_fit(const CovMatrix& s, const Matrix& penalty, const GlassoConfig& cfg,
                              const GlassoFit* warm = nullptr);

PrecisionEstimate graphical_lasso(const CovMatrix& s, double lambda, const GlassoConfig& cfg = {});

/// Second-pass reweighted glasso with weights lambda / (|Theta0_uv| + eps).
PrecisionEstimate adaptive_graphical_lasso(const CovMatrix& s, double lambda,
                                           const GlassoConfig& cfg = {}, double eps = 1e-4);

/// Objective tr(Theta S) - log det Theta + sum penalty_uv |Theta_uv|; +inf if
/// Theta is not positive-definite.
double glasso_objective(const CovMatrix& s, const Matrix& theta, const Matrix& penalty);

/// Largest violation of the glasso stationarity conditions at theta, using W = theta^-1.
double glasso_kkt_residual(const CovMatrix& s, const Matrix& theta, const Matrix& penalty);

/// Meinshausen-Buhlmann node-wise regressions; column j is Gamma_j / tau_j^2.
PrecisionEstimate nodewise_lasso(const RowMatrix& rows, double lambda, double variance_floor = 1e-8);
/// Same, from the Gram matrix (1/n) X^T X directly.
PrecisionEstimate nodewise_lasso(const CovMatrix& gram, double lambda, double variance_floor = 1e-8);

DesparsifiedEstimate desparsify(const PrecisionEstimate& theta, const CovMatrix& sigma);
DesparsifiedEstimate desparsify(const Matrix& theta, const Matrix& sigma);

/// Hard-threshold off-diagonal entries and shift the diagonal until the
/// smallest eigenvalue exceeds 1e-10, in steps of pd_bump * max diagonal.
PrecisionEstimate threshold_symmetrize(const DesparsifiedEstimate& t, double threshold,
                                       double pd_bump = 1e-6);

ScoreScale score_scale(const PrecisionEstimate& theta, double floor = 1e-8);

ScoreMatrix score_matrix(const PrecisionEstimate& theta, const Vector& x);

/// max |T - (Theta* - Theta* (Sigma_hat - Sigma*) Theta*)|.  Simulation use only.
double residual_diagnostic(const DesparsifiedEstimate& t, const PrecisionEstimate& theta_star,
                           const CovMatrix& sigma_hat, const CovMatrix& sigma_star);

/// delta_n(chi) = 2 L^2 ((2 log p + chi) / n + sqrt((4 log p + 2 chi) / n)).
double covariance_concentration_radius(std::size_t p, std::size_t n, double chi, double L);

double max_abs(const Matrix& m);

}  // namespace covshift
