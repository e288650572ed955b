#pragma once

// Index-resampling bootstrap: draw calibration indices with replacement,
// rebuild score sums under the calibration precision estimate, and turn the
// replicate maxima into multiplicity-corrected thresholds.

#include "covshift/estimation.hpp"
#include "covshift/statistic.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace covshift {

enum class ScoreKind {
  /// Scaled de-sparsified scores, window factor 1/sqrt(2n).
  Precision,
  /// Raw centered outer products, window factor 1/n (covariance-difference mode).
  Covariance,
};

struct CalibrationContext {
  ScoreKind kind = ScoreKind::Precision;
  RowMatrix centered;  // calibration rows minus their mean
  PrecisionEstimate theta;
  ScoreScale scale;
  /// Z_j = (Theta x_j)(Theta x_j)^T - Theta, column-stacked and divided by sigma.
  std::vector<Vector> scores;
  /// Upper triangle of the x-dependent part of each scaled score.  The
  /// constant -Theta term cancels between two windows of equal length, so
  /// replicates are built from these rows alone.
  RowMatrix packed;

  std::size_t size() const { return static_cast<std::size_t>(centered.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(centered.cols()); }
  double window_factor(std::size_t n) const;
};

CalibrationContext build_calibration(const Sample& sample, const EstimatorConfig& est);
CalibrationContext build_calibration(const RowMatrix& calibration_rows, const EstimatorConfig& est);

/// Calibration for the unscaled covariance-difference statistic.
CalibrationContext build_covariance_calibration(const RowMatrix& calibration_rows);

/// Calibration rows selected by the sample's 1-based calibration set.
RowMatrix calibration_rows(const Sample& sample);

/// Per-window maxima A_n over t for one replicate, ordered as plan.windows().
std::vector<double> bootstrap_replicate(const CalibrationContext& ctx, const WindowPlan& plan,
                                        std::uint64_t replicate_seed);

/// Same as bootstrap_replicate for an explicit index sequence (0-based rows of
/// ctx, length plan.sample_size()).
std::vector<double> bootstrap_replicate_from_indices(const CalibrationContext& ctx,
                                                     const WindowPlan& plan,
                                                     std::span<const std::size_t> kappa);

/// The kappa sequence bootstrap_replicate draws for `replicate_seed`.
std::vector<std::size_t> draw_indices(std::size_t calibration_size, std::size_t length,
                                      std::uint64_t replicate_seed);

struct BootstrapReplicates {
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
  std::size_t sample_size = 0;
  std::vector<std::size_t> windows;
  std::vector<std::vector<double>> maxima;  // [window][replicate]

  const std::vector<double>& at(std::size_t n) const;
};

/// ceil(10 / alpha)
std::size_t minimum_replicates(double alpha);

/// Replicate r (1-based) uses split_seed(master_seed, r).  When `alpha` is
/// given, B below minimum_replicates(alpha) is rejected.
BootstrapReplicates run_bootstrap(const CalibrationContext& ctx, const WindowPlan& plan,
                                  std::size_t replicates, std::uint64_t master_seed,
                                  std::size_t threads = 0,
                                  std::optional<double> alpha = std::nullopt);

/// Smallest replicate value z with #{A > z} <= k (clamped to the minimum when k >= B).
double quantile_at_count(const std::vector<double>& sorted_values, std::size_t k);

/// Empirical z_n(x) = inf{z : P(A_n > z) <= x}.
double quantile_fn(const BootstrapReplicates& reps, std::size_t n, double level);

/// Largest achievable level k/B whose joint exceedance fraction is <= alpha.
double multiplicity_correct(const BootstrapReplicates& reps, double alpha);

struct WindowThreshold {
  std::size_t n = 0;
  double threshold = 0.0;
};

struct ThresholdSet {
  double alpha = 0.0;
  double alpha_star = 0.0;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
  /// Horizon N the replicates were drawn for (0 when unknown).
  std::size_t sample_size = 0;
  std::vector<WindowThreshold> windows;  // ascending n

  double at(std::size_t n) const;
  std::vector<std::size_t> window_sizes() const;
};

ThresholdSet thresholds(const BootstrapReplicates& reps, double alpha);

/// Number of replicates with A_n > threshold_n for some n.
std::size_t joint_exceedances(const BootstrapReplicates& reps, const ThresholdSet& thr);

}  // namespace covshift
