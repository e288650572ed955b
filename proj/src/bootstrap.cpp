#include "covshift/bootstrap.hpp"

#include "covshift/error.hpp"
#include "covshift/parallel.hpp"
#include "covshift/rng.hpp"

#include <algorithm>
#include <cmath>

namespace covshift {

namespace {

// Achievable level k/B for a real level x, robust to x = k/B rounding.
std::size_t level_count(double x, std::size_t b) {
  if (x <= 0.0) return 0;
  const double k = std::floor(x * static_cast<double>(b) + 1e-9);
  return static_cast<std::size_t>(std::min(k, static_cast<double>(b)));
}

Vector packed_upper(const Vector& y, const Vector& weights_or_empty, std::size_t p) {
  Vector out(static_cast<Eigen::Index>(p * (p + 1) / 2));
  Eigen::Index k = 0;
  for (std::size_t v = 0; v < p; ++v) {
    for (std::size_t u = 0; u <= v; ++u) {
      double val = y[static_cast<Eigen::Index>(u)] * y[static_cast<Eigen::Index>(v)];
      if (weights_or_empty.size() > 0)
        val /= weights_or_empty[static_cast<Eigen::Index>(u + v * p)];
      out[k++] = val;
    }
  }
  return out;
}

}  // namespace

double CalibrationContext::window_factor(std::size_t n) const {
  const double dn = static_cast<double>(n);
  return kind == ScoreKind::Precision ? 1.0 / std::sqrt(2.0 * dn) : 1.0 / dn;
}

RowMatrix calibration_rows(const Sample& sample) {
  RowMatrix rows(static_cast<Eigen::Index>(sample.calibration.size()), sample.rows.cols());
  for (std::size_t k = 0; k < sample.calibration.size(); ++k) {
    rows.row(static_cast<Eigen::Index>(k)) =
        sample.rows.row(static_cast<Eigen::Index>(sample.calibration[k] - 1));
  }
  return rows;
}

CalibrationContext build_calibration(const Sample& sample, const EstimatorConfig& est) {
  return build_calibration(calibration_rows(sample), est);
}

CalibrationContext build_calibration(const RowMatrix& rows, const EstimatorConfig& est) {
  if (rows.rows() < 2) throw data_error("calibration: need at least 2 calibration observations");
  const auto p = static_cast<std::size_t>(rows.cols());

  CalibrationContext ctx;
  ctx.kind = ScoreKind::Precision;
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  ctx.centered = rows.rowwise() - mean;

  try {
    CovMatrix cov = empirical_covariance(rows);
    if (est.center) cov.entries.noalias() -= mean.transpose() * mean;
    EstimatorConfig cal = est;
    // Raw node-wise output is asymmetric; its thresholded de-sparsified
    // version is the symmetric estimate the plug-in variances need.
    if (cal.method == Method::NodeWise) cal.method = Method::NodeWiseThresholded;
    cal.glasso.penalize_diagonal = est.calibration_penalize_diagonal;
    ctx.theta = fit_precision(cov, cal);
    ctx.scale = score_scale(ctx.theta);
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("calibration: ") + e.what());
  }

  const std::size_t m = p * (p + 1) / 2;
  ctx.packed.resize(rows.rows(), static_cast<Eigen::Index>(m));
  ctx.scores.reserve(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index j = 0; j < rows.rows(); ++j) {
    const Vector x = ctx.centered.row(j).transpose();
    const Matrix z = score_matrix(ctx.theta, x).entries;
    ctx.scores.push_back(Eigen::Map<const Vector>(z.data(), z.size()).cwiseQuotient(ctx.scale.sigma));
    const Vector y = ctx.theta.entries * x;
    ctx.packed.row(j) = packed_upper(y, ctx.scale.sigma, p).transpose();
  }
  return ctx;
}

CalibrationContext build_covariance_calibration(const RowMatrix& rows) {
  if (rows.rows() < 2) throw data_error("calibration: need at least 2 calibration observations");
  const auto p = static_cast<std::size_t>(rows.cols());
  CalibrationContext ctx;
  ctx.kind = ScoreKind::Covariance;
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  ctx.centered = rows.rowwise() - mean;
  ctx.theta.entries = Matrix::Identity(rows.cols(), rows.cols());
  ctx.theta.method = Method::ExactInverse;
  ctx.scale.dim = p;
  ctx.scale.sigma = Vector::Ones(static_cast<Eigen::Index>(p * p));
  const std::size_t m = p * (p + 1) / 2;
  ctx.packed.resize(rows.rows(), static_cast<Eigen::Index>(m));
  for (Eigen::Index j = 0; j < rows.rows(); ++j) {
    const Vector x = ctx.centered.row(j).transpose();
    const Matrix z = x * x.transpose();
    ctx.scores.push_back(Eigen::Map<const Vector>(z.data(), z.size()));
    ctx.packed.row(j) = packed_upper(x, Vector(), p).transpose();
  }
  return ctx;
}

std::vector<std::size_t> draw_indices(std::size_t calibration_size, std::size_t length,
                                      std::uint64_t replicate_seed) {
  CounterRng rng(replicate_seed);
  std::vector<std::size_t> kappa(length);
  for (auto& k : kappa) k = static_cast<std::size_t>(rng.index(calibration_size));
  return kappa;
}

std::vector<double> bootstrap_replicate(const CalibrationContext& ctx, const WindowPlan& plan,
                                        std::uint64_t replicate_seed) {
  const auto kappa = draw_indices(ctx.size(), plan.sample_size(), replicate_seed);
  return bootstrap_replicate_from_indices(ctx, plan, kappa);
}

std::vector<double> bootstrap_replicate_from_indices(const CalibrationContext& ctx,
                                                     const WindowPlan& plan,
                                                     std::span<const std::size_t> kappa) {
  const std::size_t N = plan.sample_size();
  if (kappa.size() != N) throw usage_error("bootstrap: index sequence length differs from N");
  const Eigen::Index m = ctx.packed.cols();

  // prefix.row(k) = sum of the first k resampled score rows
  RowMatrix prefix(static_cast<Eigen::Index>(N + 1), m);
  prefix.row(0).setZero();
  for (std::size_t i = 0; i < N; ++i) {
    if (kappa[i] >= ctx.size()) throw usage_error("bootstrap: index out of calibration range");
    prefix.row(static_cast<Eigen::Index>(i + 1)) =
        prefix.row(static_cast<Eigen::Index>(i)) +
        ctx.packed.row(static_cast<Eigen::Index>(kappa[i]));
  }

  std::vector<double> maxima;
  maxima.reserve(plan.windows().size());
  for (std::size_t n : plan.windows()) {
    const IndexRange ts = plan.central_points(n);
    double best = 0.0;
    for (std::size_t t = ts.first; t <= ts.last; ++t) {
      // left - right = 2 P[t-1] - P[t-n-1] - P[t+n-1]
      const auto mid = prefix.row(static_cast<Eigen::Index>(t - 1));
      const auto lo = prefix.row(static_cast<Eigen::Index>(t - n - 1));
      const auto hi = prefix.row(static_cast<Eigen::Index>(t + n - 1));
      const double v = (2.0 * mid - lo - hi).cwiseAbs().maxCoeff();
      best = std::max(best, v);
    }
    maxima.push_back(best * ctx.window_factor(n));
  }
  return maxima;
}

const std::vector<double>& BootstrapReplicates::at(std::size_t n) const {
  for (std::size_t w = 0; w < windows.size(); ++w)
    if (windows[w] == n) return maxima[w];
  throw usage_error("no bootstrap replicates for window size " + std::to_string(n));
}

std::size_t minimum_replicates(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw usage_error("alpha must lie in (0, 1]");
  return static_cast<std::size_t>(std::ceil(10.0 / alpha - 1e-9));
}

BootstrapReplicates run_bootstrap(const CalibrationContext& ctx, const WindowPlan& plan,
                                  std::size_t replicates, std::uint64_t master_seed,
                                  std::size_t threads, std::optional<double> alpha) {
  if (replicates == 0) throw usage_error("bootstrap: B must be positive");
  if (alpha) {
    const std::size_t floor_b = minimum_replicates(*alpha);
    if (replicates < floor_b) {
      throw usage_error("bootstrap: B=" + std::to_string(replicates) + " is below the minimum " +
                        std::to_string(floor_b) + " for alpha");
    }
  }

  std::vector<std::vector<double>> per_rep(replicates);
  parallel_for(replicates, threads, [&](std::size_t r) {
    per_rep[r] = bootstrap_replicate(ctx, plan, split_seed(master_seed, r + 1));
  });

  BootstrapReplicates out;
  out.replicates = replicates;
  out.seed = master_seed;
  out.sample_size = plan.sample_size();
  out.windows = plan.windows();
  out.maxima.assign(out.windows.size(), std::vector<double>(replicates));
  for (std::size_t r = 0; r < replicates; ++r)
    for (std::size_t w = 0; w < out.windows.size(); ++w) out.maxima[w][r] = per_rep[r][w];
  return out;
}

double quantile_at_count(const std::vector<double>& sorted_values, std::size_t k) {
  if (sorted_values.empty()) throw usage_error("quantile of an empty replicate set");
  const std::size_t b = sorted_values.size();
  if (k >= b) return sorted_values.front();
  return sorted_values[b - k - 1];
}

double quantile_fn(const BootstrapReplicates& reps, std::size_t n, double level) {
  if (!(level >= 0.0 && level <= 1.0)) throw usage_error("quantile level must lie in [0, 1]");
  std::vector<double> v = reps.at(n);
  std::sort(v.begin(), v.end());
  return quantile_at_count(v, level_count(level, v.size()));
}

namespace {

std::vector<std::vector<double>> sorted_maxima(const BootstrapReplicates& reps) {
  auto sorted = reps.maxima;
  for (auto& v : sorted) std::sort(v.begin(), v.end());
  return sorted;
}

std::size_t corrected_count(const BootstrapReplicates& reps,
                            const std::vector<std::vector<double>>& sorted, double alpha) {
  const std::size_t b = reps.replicates;
  const std::size_t allowed = level_count(alpha, b);
  std::vector<double> thr(reps.windows.size());
  for (std::size_t k = b + 1; k-- > 0;) {
    for (std::size_t w = 0; w < thr.size(); ++w) thr[w] = quantile_at_count(sorted[w], k);
    std::size_t joint = 0;
    for (std::size_t r = 0; r < b; ++r) {
      for (std::size_t w = 0; w < thr.size(); ++w) {
        if (reps.maxima[w][r] > thr[w]) {
          ++joint;
          break;
        }
      }
    }
    if (joint <= allowed) return k;
  }
  return 0;
}

}  // namespace

double multiplicity_correct(const BootstrapReplicates& reps, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw usage_error("alpha must lie in (0, 1]");
  if (reps.replicates == 0) throw usage_error("no bootstrap replicates");
  const auto sorted = sorted_maxima(reps);
  return static_cast<double>(corrected_count(reps, sorted, alpha)) /
         static_cast<double>(reps.replicates);
}

ThresholdSet thresholds(const BootstrapReplicates& reps, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw usage_error("alpha must lie in (0, 1]");
  if (reps.replicates == 0) throw usage_error("no bootstrap replicates");
  const auto sorted = sorted_maxima(reps);
  const std::size_t k = corrected_count(reps, sorted, alpha);
  ThresholdSet out;
  out.alpha = alpha;
  out.alpha_star = static_cast<double>(k) / static_cast<double>(reps.replicates);
  out.replicates = reps.replicates;
  out.seed = reps.seed;
  out.sample_size = reps.sample_size;
  for (std::size_t w = 0; w < reps.windows.size(); ++w) {
    out.windows.push_back({reps.windows[w], quantile_at_count(sorted[w], k)});
  }
  return out;
}

double ThresholdSet::at(std::size_t n) const {
  for (const auto& w : windows)
    if (w.n == n) return w.threshold;
  throw usage_error("no threshold for window size " + std::to_string(n));
}

std::vector<std::size_t> ThresholdSet::window_sizes() const {
  std::vector<std::size_t> out;
  for (const auto& w : windows) out.push_back(w.n);
  return out;
}

std::size_t joint_exceedances(const BootstrapReplicates& reps, const ThresholdSet& thr) {
  std::size_t joint = 0;
  for (std::size_t r = 0; r < reps.replicates; ++r) {
    for (std::size_t w = 0; w < reps.windows.size(); ++w) {
      if (reps.maxima[w][r] > thr.at(reps.windows[w])) {
        ++joint;
        break;
      }
    }
  }
  return joint;
}

}  // namespace covshift
