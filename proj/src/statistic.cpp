#include "covshift/statistic.hpp"

#include "covshift/error.hpp"
#include "covshift/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace covshift {

Sample make_sample(RowMatrix rows, std::vector<std::size_t> calibration) {
  if (rows.rows() == 0 || rows.cols() == 0) throw data_error("sample is empty");
  if (!rows.allFinite()) throw data_error("sample contains non-finite values");
  std::sort(calibration.begin(), calibration.end());
  calibration.erase(std::unique(calibration.begin(), calibration.end()), calibration.end());
  if (calibration.empty()) throw data_error("calibration set is empty");
  const auto n = static_cast<std::size_t>(rows.rows());
  if (calibration.front() < 1 || calibration.back() > n) {
    std::ostringstream os;
    os << "calibration index out of range 1.." << n;
    throw data_error(os.str());
  }
  return Sample{std::move(rows), std::move(calibration)};
}

Sample make_sample(RowMatrix rows, std::size_t calib_first, std::size_t calib_last) {
  if (calib_first < 1 || calib_last < calib_first) throw data_error("invalid calibration range");
  std::vector<std::size_t> idx;
  for (std::size_t i = calib_first; i <= calib_last; ++i) idx.push_back(i);
  return make_sample(std::move(rows), std::move(idx));
}

WindowPlan::WindowPlan(std::size_t sample_size, std::vector<std::size_t> windows)
    : sample_size_(sample_size), windows_(std::move(windows)) {
  std::sort(windows_.begin(), windows_.end());
  windows_.erase(std::unique(windows_.begin(), windows_.end()), windows_.end());
  if (windows_.empty()) throw usage_error("window set is empty");
  if (windows_.front() == 0) throw usage_error("window sizes must be positive");
  if (sample_size_ <= 2 * windows_.back()) {
    std::ostringstream os;
    os << "sample too short for widest window (N=" << sample_size_ << ", n+=" << windows_.back()
       << ")";
    throw data_error(os.str());
  }
  for (std::size_t n : windows_) total_ += central_points(n).size();
}

IndexRange WindowPlan::central_points(std::size_t n) const {
  return {n + 1, sample_size_ - n + 1};
}

WindowPlan window_plan(std::size_t sample_size, std::vector<std::size_t> windows) {
  return WindowPlan(sample_size, std::move(windows));
}

double EstimatorConfig::lambda_for(std::size_t p, std::size_t n) const {
  return lambda ? *lambda : default_lambda(p, n);
}

PrecisionEstimate fit_precision(const CovMatrix& cov, const EstimatorConfig& est, GlassoFit* warm) {
  const std::size_t p = cov.dim();
  const double lambda = est.lambda_for(p, cov.sample_size);
  switch (est.method) {
    case Method::GraphicalLasso: {
      const GlassoFit* start = (warm != nullptr && warm->w.size() > 0) ? warm : nullptr;
      GlassoFit fit = graphical_lasso_fit(
          cov, uniform_penalty(p, lambda, est.glasso.penalize_diagonal), est.glasso, start);
      PrecisionEstimate out = fit.estimate;
      if (warm != nullptr) *warm = std::move(fit);
      return out;
    }
    case Method::AdaptiveGraphicalLasso:
      return adaptive_graphical_lasso(cov, lambda, est.glasso, est.adaptive_eps);
    case Method::NodeWise:
      return nodewise_lasso(cov, lambda);
    case Method::NodeWiseThresholded: {
      const PrecisionEstimate raw = nodewise_lasso(cov, lambda);
      return threshold_symmetrize(desparsify(raw, cov), est.nodewise_threshold.value_or(lambda));
    }
    case Method::ExactInverse: {
      Eigen::LLT<Matrix> llt(cov.entries);
      if (llt.info() != Eigen::Success) throw numerical_error("covariance is not invertible");
      PrecisionEstimate out;
      out.entries = llt.solve(Matrix::Identity(cov.entries.rows(), cov.entries.cols()));
      out.entries = 0.5 * (out.entries + out.entries.transpose());
      out.method = Method::ExactInverse;
      return out;
    }
  }
  throw usage_error("unsupported estimator");
}

WindowFitChain::WindowFitChain(std::size_t p, std::size_t n, const EstimatorConfig& est)
    : p_(p),
      n_(n),
      est_(est),
      second_moment_(Matrix::Zero(p, p)),
      first_moment_(Vector::Zero(p)) {
  cov_.entries = Matrix::Zero(p, p);
  cov_.sample_size = n;
}

void WindowFitChain::recompute(std::size_t start, const RowFetch& row) {
  second_moment_.setZero();
  first_moment_.setZero();
  for (std::size_t i = start; i < start + n_; ++i) {
    Eigen::Map<const Vector> x(row(i), static_cast<Eigen::Index>(p_));
    second_moment_.selfadjointView<Eigen::Lower>().rankUpdate(x, 1.0);
    first_moment_ += x;
  }
}

const DesparsifiedEstimate& WindowFitChain::fit(std::size_t start, const RowFetch& row) {
  const bool fresh =
      !last_start_ || start != *last_start_ + 1 || (start - 1) % kChunkLength == 0;
  if (fresh || !est_.sliding_covariance) {
    recompute(start, row);
  } else {
    Eigen::Map<const Vector> leaving(row(start - 1), static_cast<Eigen::Index>(p_));
    Eigen::Map<const Vector> entering(row(start + n_ - 1), static_cast<Eigen::Index>(p_));
    // A repeated row leaves the window sums unchanged; skipping keeps them bitwise stable.
    if ((entering.array() != leaving.array()).any()) {
      second_moment_.selfadjointView<Eigen::Lower>().rankUpdate(entering, 1.0);
      second_moment_.selfadjointView<Eigen::Lower>().rankUpdate(leaving, -1.0);
      first_moment_ += entering;
      first_moment_ -= leaving;
    }
  }
  last_start_ = start;
  const Matrix previous = fresh ? Matrix() : cov_.entries;

  const double inv_n = 1.0 / static_cast<double>(n_);
  cov_.entries = second_moment_.selfadjointView<Eigen::Lower>();
  cov_.entries *= inv_n;
  if (est_.center) {
    const Vector mean = first_moment_ * inv_n;
    cov_.entries.noalias() -= mean * mean.transpose();
  }

  if (!fresh && cov_.entries == previous) return current_;
  if (fresh) warm_ = GlassoFit{};
  const PrecisionEstimate theta = fit_precision(cov_, est_, &warm_);
  current_ = desparsify(theta, cov_);
  return current_;
}

Vector scaled_upper(const Matrix& t, const ScoreScale& scale) {
  const auto p = static_cast<std::size_t>(t.rows());
  Vector out(static_cast<Eigen::Index>(p * (p + 1) / 2));
  Eigen::Index k = 0;
  for (std::size_t v = 0; v < p; ++v)
    for (std::size_t u = 0; u <= v; ++u) out[k++] = t(u, v) / scale(u, v);
  return out;
}

double scaled_distance(const Vector& a, const Vector& b, std::size_t n) {
  return std::sqrt(0.5 * static_cast<double>(n)) * (a - b).cwiseAbs().maxCoeff();
}

const WindowSeries& StatisticSeries::at(std::size_t n) const {
  for (const auto& w : windows)
    if (w.n == n) return w;
  throw usage_error("no series for window size " + std::to_string(n));
}

namespace {

void require_scale(const Sample& sample, const ScoreScale& scale) {
  if (scale.dim != sample.dim()) {
    throw data_error("dimension mismatch: score scale has p=" + std::to_string(scale.dim) +
                     ", sample has p=" + std::to_string(sample.dim()));
  }
}

[[noreturn]] void rethrow_with_context(const Error& e, const std::string& context) {
  if (const auto* ce = dynamic_cast<const ConvergenceError*>(&e)) {
    throw ConvergenceError(ce->iterations(), ce->residual(), context + ": " + e.what());
  }
  throw Error(e.kind(), context + ": " + e.what());
}

CovMatrix window_cov(const Sample& sample, IndexRange range, bool center) {
  RowMatrix block = sample.rows.middleRows(static_cast<Eigen::Index>(range.first - 1),
                                           static_cast<Eigen::Index>(range.size()));
  CovMatrix cov = empirical_covariance(block);
  if (center) {
    const Vector mean = block.colwise().mean().transpose();
    cov.entries.noalias() -= mean * mean.transpose();
  }
  return cov;
}

}  // namespace

double statistic_at(const Sample& sample, std::size_t n, std::size_t t, const ScoreScale& scale,
                    const EstimatorConfig& est) {
  require_scale(sample, scale);
  const WindowPlan plan(sample.size(), {n});
  if (!plan.central_points(n).contains(t)) {
    throw usage_error("central point " + std::to_string(t) + " outside T_" + std::to_string(n));
  }
  Vector packed[2];
  const IndexRange sides[2] = {WindowPlan::left_window(n, t), WindowPlan::right_window(n, t)};
  const char* names[2] = {"left", "right"};
  for (int s = 0; s < 2; ++s) {
    try {
      const CovMatrix cov = window_cov(sample, sides[s], est.center);
      packed[s] = scaled_upper(desparsify(fit_precision(cov, est), cov).entries, scale);
    } catch (const Error& e) {
      std::ostringstream os;
      os << "n=" << n << ", t=" << t << ", " << names[s] << " side";
      rethrow_with_context(e, os.str());
    }
  }
  return scaled_distance(packed[0], packed[1], n);
}

StatisticSeries statistic_series(const Sample& sample, const WindowPlan& plan,
                                 const ScoreScale& scale, const EstimatorConfig& est,
                                 std::size_t threads) {
  require_scale(sample, scale);
  if (plan.sample_size() != sample.size()) {
    throw usage_error("window plan was built for N=" + std::to_string(plan.sample_size()) +
                      " but sample has N=" + std::to_string(sample.size()));
  }
  const std::size_t N = sample.size();
  const std::size_t p = sample.dim();

  struct Task {
    std::size_t window;  // index into plan.windows()
    std::size_t first_start;
    std::size_t last_start;
  };
  std::vector<std::vector<Vector>> packed(plan.windows().size());
  std::vector<Task> tasks;
  for (std::size_t w = 0; w < plan.windows().size(); ++w) {
    const std::size_t n = plan.windows()[w];
    const std::size_t starts = N - n + 1;
    packed[w].resize(starts);
    for (std::size_t first = 1; first <= starts; first += kChunkLength) {
      tasks.push_back({w, first, std::min(first + kChunkLength - 1, starts)});
    }
  }

  const WindowFitChain::RowFetch row = [&sample](std::size_t i) {
    return sample.rows.row(static_cast<Eigen::Index>(i - 1)).data();
  };

  parallel_for(tasks.size(), threads, [&](std::size_t k) {
    const Task& task = tasks[k];
    const std::size_t n = plan.windows()[task.window];
    WindowFitChain chain(p, n, est);
    for (std::size_t i = task.first_start; i <= task.last_start; ++i) {
      try {
        packed[task.window][i - 1] = scaled_upper(chain.fit(i, row).entries, scale);
      } catch (const Error& e) {
        std::ostringstream os;
        os << "n=" << n << ", window " << i << ".." << i + n - 1 << " (right side of t=" << i
           << ", left side of t=" << i + n << ")";
        rethrow_with_context(e, os.str());
      }
    }
  });

  StatisticSeries out;
  for (std::size_t w = 0; w < plan.windows().size(); ++w) {
    const std::size_t n = plan.windows()[w];
    const IndexRange ts = plan.central_points(n);
    WindowSeries series;
    series.n = n;
    series.first_t = ts.first;
    series.values.reserve(ts.size());
    for (std::size_t t = ts.first; t <= ts.last; ++t) {
      series.values.push_back(scaled_distance(packed[w][t - n - 1], packed[w][t - 1], n));
    }
    series.max = *std::max_element(series.values.begin(), series.values.end());
    out.windows.push_back(std::move(series));
  }
  return out;
}

Sample reversed(const Sample& sample) {
  const std::size_t N = sample.size();
  Sample out;
  out.rows = sample.rows.colwise().reverse();
  for (std::size_t i : sample.calibration) out.calibration.push_back(N - i + 1);
  std::sort(out.calibration.begin(), out.calibration.end());
  return out;
}

}  // namespace covshift
