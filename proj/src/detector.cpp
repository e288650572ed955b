#include "covshift/detector.hpp"

#include "covshift/error.hpp"
#include "covshift/rng.hpp"

#include <algorithm>
#include <cassert>

namespace covshift {

namespace {

void require_same_windows(const StatisticSeries& series, const ThresholdSet& thr) {
  bool same = series.windows.size() == thr.windows.size();
  for (std::size_t w = 0; same && w < series.windows.size(); ++w) {
    same = series.windows[w].n == thr.windows[w].n;
  }
  if (!same) throw usage_error("window-set mismatch between statistic series and thresholds");
}

}  // namespace

DetectionResult detect_offline(const StatisticSeries& series, const ThresholdSet& thr) {
  require_same_windows(series, thr);
  DetectionResult out;
  for (std::size_t w = 0; w < series.windows.size(); ++w) {
    const WindowSeries& s = series.windows[w];
    WindowDecision d{s.n, s.max, thr.windows[w].threshold, s.max > thr.windows[w].threshold};
    out.rejected = out.rejected || d.exceeded;
    out.per_window.push_back(d);
  }
  return out;
}

DetectionResult localize(const StatisticSeries& series, const ThresholdSet& thr) {
  DetectionResult out = detect_offline(series, thr);
  if (!out.rejected) return out;
  for (std::size_t w = 0; w < series.windows.size(); ++w) {
    if (!out.per_window[w].exceeded) continue;
    const WindowSeries& s = series.windows[w];
    const double threshold = out.per_window[w].threshold;
    for (std::size_t k = 0; k < s.values.size(); ++k) {
      if (s.values[k] > threshold) {
        const std::size_t tau = s.first_t + k;
        out.n_hat = s.n;
        out.tau_hat = tau;
        out.interval = IndexRange{tau - s.n, tau + s.n - 1};
        assert(tau >= s.n + 1);
        return out;
      }
    }
  }
  return out;
}

std::optional<Alarm> first_alarm(const StatisticSeries& series, const ThresholdSet& thr) {
  require_same_windows(series, thr);
  std::optional<Alarm> best;
  for (std::size_t w = 0; w < series.windows.size(); ++w) {
    const WindowSeries& s = series.windows[w];
    const double threshold = thr.windows[w].threshold;
    for (std::size_t k = 0; k < s.values.size(); ++k) {
      if (s.values[k] > threshold) {
        const std::size_t t = s.first_t + k;
        const Alarm a{t + s.n - 1, s.n, t, s.values[k]};
        // windows are visited in ascending n, so only a strictly earlier time wins
        if (!best || a.time < best->time) best = a;
        break;
      }
    }
  }
  return best;
}

OnlineMonitor::OnlineMonitor(ThresholdSet thr, WindowPlan plan, ScoreScale scale,
                             EstimatorConfig est)
    : thr_(std::move(thr)),
      plan_(std::move(plan)),
      scale_(std::move(scale)),
      p_(scale_.dim),
      capacity_(2 * plan_.widest()) {
  if (thr_.window_sizes() != plan_.windows()) {
    throw usage_error("window-set mismatch between thresholds and window plan");
  }
  if (thr_.sample_size != 0 && thr_.sample_size != plan_.sample_size()) {
    throw usage_error("thresholds were calibrated for N=" + std::to_string(thr_.sample_size) +
                      ", monitor horizon is N=" + std::to_string(plan_.sample_size()));
  }
  buffer_.assign(capacity_ * p_, 0.0);
  for (std::size_t n : plan_.windows()) {
    states_.push_back(WindowState{n, WindowFitChain(p_, n, est), std::vector<Vector>(n + 1)});
  }
}

const double* OnlineMonitor::row(std::size_t index) const {
  return buffer_.data() + ((index - 1) % capacity_) * p_;
}

std::optional<Alarm> OnlineMonitor::push(std::span<const double> x) {
  if (x.size() != p_) {
    throw data_error("observation " + std::to_string(time_ + 1) + " has " +
                     std::to_string(x.size()) + " values, expected " + std::to_string(p_));
  }
  if (time_ >= plan_.sample_size()) {
    throw usage_error("monitor horizon N=" + std::to_string(plan_.sample_size()) + " exceeded");
  }
  ++time_;
  std::copy(x.begin(), x.end(), buffer_.begin() + static_cast<std::ptrdiff_t>(((time_ - 1) % capacity_) * p_));
  {
    std::lock_guard lock(alarm_mutex_);
    if (alarm_) return std::nullopt;
  }

  const WindowFitChain::RowFetch fetch = [this](std::size_t i) { return row(i); };
  for (WindowState& st : states_) {
    const std::size_t n = st.n;
    if (time_ < n) continue;
    const std::size_t start = time_ - n + 1;
    st.recent[start % (n + 1)] = scaled_upper(st.chain.fit(start, fetch).entries, scale_);

    // the window just completed is the right window of t = start
    const std::size_t t = start;
    if (!plan_.central_points(n).contains(t)) continue;
    const double a = scaled_distance(st.recent[(t - n) % (n + 1)], st.recent[t % (n + 1)], n);
    if (a > thr_.at(n)) {
      const Alarm fired{time_, n, t, a};
      std::lock_guard lock(alarm_mutex_);
      alarm_ = fired;
      return fired;
    }
  }
  return std::nullopt;
}

std::optional<Alarm> OnlineMonitor::alarm() const {
  std::lock_guard lock(alarm_mutex_);
  return alarm_;
}

std::optional<Alarm> monitor_online(const ObservationSource& source, const ThresholdSet& thr,
                                    const WindowPlan& plan, const ScoreScale& scale,
                                    const EstimatorConfig& est) {
  OnlineMonitor monitor(thr, plan, scale, est);
  while (monitor.time() < monitor.horizon()) {
    auto x = source();
    if (!x) return std::nullopt;
    if (auto alarm = monitor.push(*x)) return alarm;
  }
  return std::nullopt;
}

SegmentRun run_segment(const Sample& sample, const std::vector<std::size_t>& windows, double alpha,
                       std::size_t replicates, std::uint64_t seed, const EstimatorConfig& est,
                       std::size_t threads) {
  const WindowPlan plan(sample.size(), windows);
  const CalibrationContext ctx = build_calibration(sample, est);
  const BootstrapReplicates reps = run_bootstrap(ctx, plan, replicates, seed, threads, alpha);
  SegmentRun run;
  run.thresholds = thresholds(reps, alpha);
  run.series = statistic_series(sample, plan, ctx.scale, est, threads);
  run.result = localize(run.series, run.thresholds);
  return run;
}

MultipleResult detect_multiple(const Sample& sample, const MultipleConfig& cfg) {
  if (cfg.windows.empty()) throw usage_error("window set is empty");
  const std::size_t widest = *std::max_element(cfg.windows.begin(), cfg.windows.end());
  const std::size_t N = sample.size();

  MultipleResult out;
  std::size_t offset = 0;  // rows before the current segment
  for (std::uint64_t segment = 1;; ++segment) {
    const std::size_t remaining = N - offset;
    Sample seg;
    if (segment == 1) {
      seg = sample;
    } else {
      if (remaining < cfg.calibration_size || remaining <= 2 * widest ||
          cfg.calibration_size < 2) {
        out.truncated = true;
        break;
      }
      seg = make_sample(sample.rows.bottomRows(static_cast<Eigen::Index>(remaining)), 1,
                        cfg.calibration_size);
    }

    const SegmentRun run = run_segment(seg, cfg.windows, cfg.alpha, cfg.replicates,
                                       split_seed(cfg.seed, segment), cfg.est, cfg.threads);
    if (!run.result.rejected) break;

    DetectionResult r = run.result;
    *r.tau_hat += offset;
    r.interval->first += offset;
    r.interval->last += offset;
    out.detections.push_back(r);
    offset = r.interval->last;
    if (offset >= N) {
      out.truncated = true;
      break;
    }
  }
  return out;
}

double break_extent(const PrecisionEstimate& theta1, const PrecisionEstimate& theta2) {
  if (theta1.dim() != theta2.dim()) throw data_error("dimension mismatch in break_extent");
  return max_abs(theta1.entries - theta2.entries);
}

}  // namespace covshift
