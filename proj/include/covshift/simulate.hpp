#pragma once

// Synthetic block-diagonal alternatives and the Monte Carlo harness that
// measures type-I error, power, localization precision and online delay.

#include "covshift/bootstrap.hpp"
#include "covshift/detector.hpp"
#include "covshift/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace covshift {

enum class OnlineMode {
  /// Feed every repetition through an OnlineMonitor.
  Monitor,
  /// Derive the online alarm from the offline series (first_alarm).
  Replay,
};

struct ScenarioConfig {
  std::size_t p = 50;
  std::size_t N = 1000;
  /// Rows tau+1..N come from the alternative; unset means the null only.
  std::optional<std::size_t> tau;
  std::size_t s = 100;
  std::vector<std::size_t> windows{200};
  double alpha = 0.05;
  std::size_t replicates = 500;
  std::size_t repetitions = 50;
  std::uint64_t seed = 1;
  /// Seed of the alternative covariance draw, fixed across repetitions.
  std::uint64_t sigma_seed = 4;
  /// Also run null repetitions when tau is set.
  bool with_null = false;
  /// Use the unscaled covariance-difference statistic instead.
  bool covariance_mode = false;
  OnlineMode online = OnlineMode::Monitor;
  EstimatorConfig est;
  std::size_t threads = 0;

  void validate() const;
};

struct BlockCovariance {
  CovMatrix sigma;
  std::vector<double> offdiag;  // one entry per 2x2 block

  std::size_t blocks() const { return offdiag.size(); }
};

/// Poisson draw by inversion of the cumulative distribution.
std::size_t draw_poisson(double mean, CounterRng& rng);

/// k ~ Poisson(3) blocks [[1, b], [b, 1]] with |b| ~ U[0.3, 0.6] and a random
/// sign, padded with an identity; k is redrawn while 2k > p.
BlockCovariance gen_alternative_cov(std::size_t p, CounterRng& rng);

/// Same layout with the block off-diagonals given explicitly.
BlockCovariance make_block_covariance(std::size_t p, const std::vector<double>& offdiag);

/// `count` rows from N(0, sigma) as lower Cholesky factor times standard normals.
RowMatrix draw_gaussian(const Matrix& sigma, std::size_t count, CounterRng& rng);

/// Rows 1..tau from sigma0, the rest from sigma1; calibration set 1..s.
Sample gen_sample(const ScenarioConfig& cfg, const CovMatrix& sigma0, const CovMatrix& sigma1,
                  CounterRng& rng);

/// A_n(t) = max |Sigma_left - Sigma_right| for every (n, t).
StatisticSeries covariance_diff_statistic(const Sample& sample, const WindowPlan& plan);

/// The scenario's alternative covariance, drawn from sigma_seed.
BlockCovariance scenario_alternative(const ScenarioConfig& cfg);

/// Data of repetition `rep` (1-based) exactly as run_experiment generates it.
Sample scenario_sample(const ScenarioConfig& cfg, const BlockCovariance& alt, std::size_t rep,
                       bool alternative);

struct RepetitionRecord {
  std::size_t index = 0;
  bool alternative = false;
  bool failed = false;
  std::string error;
  bool rejected = false;
  std::optional<std::size_t> n_hat;
  std::optional<std::size_t> tau_hat;
  std::optional<IndexRange> interval;
  std::optional<Alarm> alarm;
  double seconds = 0.0;
};

struct ExperimentReport {
  std::vector<std::size_t> windows;
  std::size_t null_runs = 0;
  std::size_t alternative_runs = 0;
  std::size_t failures = 0;
  std::optional<double> type_one;
  std::optional<double> power;
  /// Mean narrowest detecting window over rejecting alternative runs.
  std::optional<double> localization;
  /// Fraction of rejecting alternative runs whose interval contains tau.
  std::optional<double> coverage;
  std::optional<double> online_type_one;
  std::optional<double> online_power;
  /// Mean (alarm time - tau) over alternative runs alarming after tau.
  std::optional<double> mean_delay;
  std::vector<RepetitionRecord> records;
  double total_seconds = 0.0;
  std::size_t alternative_k = 0;
};

ExperimentReport run_experiment(const ScenarioConfig& cfg);

/// Runs several window sets on shared data.  Each report equals
/// run_experiment for that window set (with cfg.online honoured per set).
std::vector<ExperimentReport> run_experiment_grid(const ScenarioConfig& cfg,
                                                  const std::vector<std::vector<std::size_t>>& sets);

}  // namespace covshift
