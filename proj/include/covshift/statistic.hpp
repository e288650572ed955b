#pragma once

// Multiscale sliding-window statistics A_n(t).  All indices in this API
// (observations, central points, window starts) are 1-based.

#include "covshift/estimation.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

namespace covshift {

struct Sample {
  RowMatrix rows;                        // N x p
  std::vector<std::size_t> calibration;  // sorted 1-based indices

  std::size_t size() const { return static_cast<std::size_t>(rows.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(rows.cols()); }
};

/// Validates bounds, finiteness and ordering of the calibration set.
Sample make_sample(RowMatrix rows, std::vector<std::size_t> calibration);
/// Calibration set {first, ..., last}.
Sample make_sample(RowMatrix rows, std::size_t calib_first, std::size_t calib_last);

/// Inclusive 1-based index range.
struct IndexRange {
  std::size_t first = 0;
  std::size_t last = 0;

  std::size_t size() const { return last >= first ? last - first + 1 : 0; }
  bool contains(std::size_t i) const { return i >= first && i <= last; }
  bool operator==(const IndexRange&) const = default;
};

class WindowPlan {
 public:
  WindowPlan(std::size_t sample_size, std::vector<std::size_t> windows);

  std::size_t sample_size() const { return sample_size_; }
  const std::vector<std::size_t>& windows() const { return windows_; }
  std::size_t narrowest() const { return windows_.front(); }
  std::size_t widest() const { return windows_.back(); }
  /// Total number of (n, t) pairs.
  std::size_t total() const { return total_; }

  /// {n+1, ..., N-n+1}
  IndexRange central_points(std::size_t n) const;
  static IndexRange left_window(std::size_t n, std::size_t t) { return {t - n, t - 1}; }
  static IndexRange right_window(std::size_t n, std::size_t t) { return {t, t + n - 1}; }

 private:
  std::size_t sample_size_;
  std::vector<std::size_t> windows_;
  std::size_t total_ = 0;
};

WindowPlan window_plan(std::size_t sample_size, std::vector<std::size_t> windows);

struct EstimatorConfig {
  Method method = Method::GraphicalLasso;
  /// Fixed penalty; unset means sqrt(log p / n) for the window length n.
  std::optional<double> lambda;
  GlassoConfig glasso;
  /// Subtract the window mean before forming second moments.
  bool center = false;
  double adaptive_eps = 1e-4;
  /// Hard threshold for the node-wise de-sparsified estimate; unset means lambda.
  std::optional<double> nodewise_threshold;
  /// Diagonal penalty of the glasso fit on the calibration set.  Off by
  /// default: the plug-in scale needs an unshrunk diagonal.
  bool calibration_penalize_diagonal = false;
  /// Slide window covariances by rank-one updates (otherwise recompute each step).
  bool sliding_covariance = true;

  double lambda_for(std::size_t p, std::size_t n) const;
};

/// Windows are fitted in fixed chunks of consecutive starts; each chunk
/// recomputes its covariance and cold-starts the solver.
inline constexpr std::size_t kChunkLength = 64;

/// Precision estimate for one window covariance under `est`.  `warm` is
/// used (and updated) by the glasso paths.
PrecisionEstimate fit_precision(const CovMatrix& cov, const EstimatorConfig& est,
                                GlassoFit* warm = nullptr);

/// Fits consecutive length-n windows and returns their de-sparsified estimates.
/// Feeding the same starts in the same order always yields bitwise-identical
/// results, which the offline scan and the online monitor both rely on.
class WindowFitChain {
 public:
  /// Returns a pointer to the p values of observation `index` (1-based).
  using RowFetch = std::function<const double*(std::size_t index)>;

  WindowFitChain(std::size_t p, std::size_t n, const EstimatorConfig& est);

  /// De-sparsified estimate for the window {start, ..., start+n-1}.
  const DesparsifiedEstimate& fit(std::size_t start, const RowFetch& row);

  std::size_t window_length() const { return n_; }

 private:
  void recompute(std::size_t start, const RowFetch& row);

  std::size_t p_;
  std::size_t n_;
  EstimatorConfig est_;
  std::optional<std::size_t> last_start_;
  Matrix second_moment_;  // sum of x x^T over the window
  Vector first_moment_;   // sum of x over the window
  CovMatrix cov_;
  GlassoFit warm_;
  DesparsifiedEstimate current_;
};

/// Upper triangle (u <= v) of T / sigma, packed column by column.
Vector scaled_upper(const Matrix& t, const ScoreScale& scale);

/// sqrt(n/2) * max |a - b| over packed upper-triangle vectors.
double scaled_distance(const Vector& a, const Vector& b, std::size_t n);

struct WindowSeries {
  std::size_t n = 0;
  std::size_t first_t = 0;
  std::vector<double> values;  // A_n(t) for t = first_t, first_t + 1, ...
  double max = 0.0;

  std::size_t last_t() const { return first_t + values.size() - 1; }
  double at(std::size_t t) const { return values.at(t - first_t); }
};

struct StatisticSeries {
  std::vector<WindowSeries> windows;  // ascending n

  const WindowSeries& at(std::size_t n) const;
};

/// Single A_n(t), fitting both windows from scratch.
double statistic_at(const Sample& sample, std::size_t n, std::size_t t, const ScoreScale& scale,
                    const EstimatorConfig& est);

/// All A_n(t) for the plan.  Work is split into (n, chunk) tasks; the result
/// does not depend on `threads`.
StatisticSeries statistic_series(const Sample& sample, const WindowPlan& plan,
                                 const ScoreScale& scale, const EstimatorConfig& est,
                                 std::size_t threads = 0);

/// Mirror a sample in time (row i goes to N - i + 1); calibration indices follow.
Sample reversed(const Sample& sample);

}  // namespace covshift
