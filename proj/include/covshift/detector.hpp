#pragma once

// Decisions on top of the statistic series: offline rejection and
// localization, online monitoring, and sequential multi-break detection.

#include "covshift/bootstrap.hpp"
#include "covshift/statistic.hpp"

#include <cstddef>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

namespace covshift {

struct WindowDecision {
  std::size_t n = 0;
  double statistic = 0.0;  // A_n
  double threshold = 0.0;
  bool exceeded = false;
};

struct DetectionResult {
  bool rejected = false;
  std::optional<std::size_t> n_hat;
  std::optional<std::size_t> tau_hat;
  std::optional<IndexRange> interval;  // [tau - n, tau + n - 1]
  std::vector<WindowDecision> per_window;
};

/// Rejects iff A_n > threshold_n for some n (strict).
DetectionResult detect_offline(const StatisticSeries& series, const ThresholdSet& thr);

/// detect_offline plus the narrowest detecting window and its first exceedance.
DetectionResult localize(const StatisticSeries& series, const ThresholdSet& thr);

struct Alarm {
  std::size_t time = 0;  // arrival index of the observation completing the right window
  std::size_t n = 0;
  std::size_t t = 0;
  double statistic = 0.0;

  bool operator==(const Alarm&) const = default;
};

/// The alarm an online monitor would raise on the same data: the smallest
/// completion index t + n - 1 over exceeding (n, t), ties going to smaller n.
std::optional<Alarm> first_alarm(const StatisticSeries& series, const ThresholdSet& thr);

/// Single-owner online detector.  push() is called by one feeding thread;
/// alarm() may be read concurrently.
class OnlineMonitor {
 public:
  OnlineMonitor(ThresholdSet thr, WindowPlan plan, ScoreScale scale, EstimatorConfig est);

  /// Feed the next observation.  Returns the alarm if this arrival raised it.
  std::optional<Alarm> push(std::span<const double> x);

  std::optional<Alarm> alarm() const;
  std::size_t time() const { return time_; }
  std::size_t horizon() const { return plan_.sample_size(); }

 private:
  struct WindowState {
    std::size_t n;
    WindowFitChain chain;
    std::vector<Vector> recent;  // packed estimates, slot = start % (n + 1)
  };

  const double* row(std::size_t index) const;

  ThresholdSet thr_;
  WindowPlan plan_;
  ScoreScale scale_;
  std::size_t p_;
  std::size_t capacity_;
  std::vector<double> buffer_;  // ring of the last 2 n+ observations
  std::size_t time_ = 0;
  std::vector<WindowState> states_;
  mutable std::mutex alarm_mutex_;
  std::optional<Alarm> alarm_;
};

/// Yields observations until exhausted.
using ObservationSource = std::function<std::optional<std::vector<double>>()>;

/// Feeds `source` through an OnlineMonitor until an alarm, the end of the
/// stream, or the calibrated horizon N.
std::optional<Alarm> monitor_online(const ObservationSource& source, const ThresholdSet& thr,
                                    const WindowPlan& plan, const ScoreScale& scale,
                                    const EstimatorConfig& est);

struct MultipleConfig {
  std::vector<std::size_t> windows;
  double alpha = 0.05;
  std::size_t replicates = 1000;
  std::uint64_t seed = 1;
  /// Calibration length s taken after each detected interval.
  std::size_t calibration_size = 100;
  EstimatorConfig est;
  std::size_t threads = 0;
};

struct MultipleResult {
  std::vector<DetectionResult> detections;  // global 1-based indices
  bool truncated = false;
};

/// Calibrate, detect, localize; after each detection restart right after the
/// localization interval using the next s points as the calibration set.
MultipleResult detect_multiple(const Sample& sample, const MultipleConfig& cfg);

/// Full single-segment pipeline: calibration, bootstrap, thresholds, series, localization.
struct SegmentRun {
  ThresholdSet thresholds;
  StatisticSeries series;
  DetectionResult result;
};
SegmentRun run_segment(const Sample& sample, const std::vector<std::size_t>& windows, double alpha,
                       std::size_t replicates, std::uint64_t seed, const EstimatorConfig& est,
                       std::size_t threads = 0);

/// Entrywise max |Theta1 - Theta2|.
double break_extent(const PrecisionEstimate& theta1, const PrecisionEstimate& theta2);

}  // namespace covshift
