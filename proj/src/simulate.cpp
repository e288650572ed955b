#include "covshift/simulate.hpp"

#include "covshift/error.hpp"
#include "covshift/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

namespace covshift {

void ScenarioConfig::validate() const {
  if (p < 1 || N < 1 || s < 2 || repetitions < 1 || replicates < 1) {
    throw usage_error("scenario: counts must be positive (s >= 2)");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw usage_error("scenario: alpha must lie in (0, 1)");
  if (tau && (*tau <= s || *tau >= N)) throw usage_error("scenario: tau must lie in (s, N)");
  if (s > N) throw usage_error("scenario: calibration set longer than the sample");
  if (windows.empty()) throw usage_error("scenario: window set is empty");
  WindowPlan(N, windows);
}

std::size_t draw_poisson(double mean, CounterRng& rng) {
  const double u = rng.uniform();
  double prob = std::exp(-mean);
  double cdf = prob;
  std::size_t k = 0;
  while (u > cdf && k < 10000) {
    ++k;
    prob *= mean / static_cast<double>(k);
    cdf += prob;
  }
  return k;
}

BlockCovariance make_block_covariance(std::size_t p, const std::vector<double>& offdiag) {
  if (2 * offdiag.size() > p) throw usage_error("too many 2x2 blocks for dimension p");
  BlockCovariance out;
  out.offdiag = offdiag;
  out.sigma.entries = Matrix::Identity(p, p);
  out.sigma.sample_size = 0;
  for (std::size_t j = 0; j < offdiag.size(); ++j) {
    const auto a = static_cast<Eigen::Index>(2 * j);
    out.sigma.entries(a, a + 1) = offdiag[j];
    out.sigma.entries(a + 1, a) = offdiag[j];
  }
  return out;
}

BlockCovariance gen_alternative_cov(std::size_t p, CounterRng& rng) {
  if (p < 2) throw usage_error("alternative covariance needs p >= 2");
  std::size_t k = 0;
  do {
    k = draw_poisson(3.0, rng);
  } while (2 * k > p);
  std::vector<double> offdiag(k);
  for (auto& b : offdiag) {
    const double magnitude = 0.3 + 0.3 * rng.uniform();
    b = rng.uniform() < 0.5 ? -magnitude : magnitude;
  }
  return make_block_covariance(p, offdiag);
}

RowMatrix draw_gaussian(const Matrix& sigma, std::size_t count, CounterRng& rng) {
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw numerical_error("covariance not PD");
  const Matrix lower = llt.matrixL();
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix z(static_cast<Eigen::Index>(count), sigma.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = normal(rng);
  return z * lower.transpose();
}

Sample gen_sample(const ScenarioConfig& cfg, const CovMatrix& sigma0, const CovMatrix& sigma1,
                  CounterRng& rng) {
  if (sigma0.dim() != cfg.p || sigma1.dim() != cfg.p) {
    throw data_error("dimension mismatch between scenario and covariances");
  }
  Eigen::LLT<Matrix> l0(sigma0.entries);
  Eigen::LLT<Matrix> l1(sigma1.entries);
  if (l0.info() != Eigen::Success || l1.info() != Eigen::Success) {
    throw numerical_error("covariance not PD");
  }
  const Matrix f0 = l0.matrixL();
  const Matrix f1 = l1.matrixL();
  const std::size_t tau = cfg.tau.value_or(cfg.N);

  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix rows(static_cast<Eigen::Index>(cfg.N), static_cast<Eigen::Index>(cfg.p));
  Vector z(static_cast<Eigen::Index>(cfg.p));
  for (std::size_t i = 0; i < cfg.N; ++i) {
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = normal(rng);
    rows.row(static_cast<Eigen::Index>(i)) = ((i < tau ? f0 : f1) * z).transpose();
  }
  return make_sample(std::move(rows), 1, cfg.s);
}

StatisticSeries covariance_diff_statistic(const Sample& sample, const WindowPlan& plan) {
  if (plan.sample_size() != sample.size()) throw usage_error("window plan does not match sample");
  const std::size_t p = sample.dim();
  const std::size_t N = sample.size();
  const ScoreScale unit{p, Vector::Ones(static_cast<Eigen::Index>(p * p)), 1e-8};

  StatisticSeries out;
  for (std::size_t n : plan.windows()) {
    const std::size_t starts = N - n + 1;
    std::vector<Vector> packed(starts);
    Matrix sum = Matrix::Zero(p, p);
    for (std::size_t i = 1; i <= starts; ++i) {
      if ((i - 1) % kChunkLength == 0) {
        sum.setZero();
        for (std::size_t r = i; r < i + n; ++r) {
          sum.selfadjointView<Eigen::Lower>().rankUpdate(
              sample.rows.row(static_cast<Eigen::Index>(r - 1)).transpose(), 1.0);
        }
      } else {
        sum.selfadjointView<Eigen::Lower>().rankUpdate(
            sample.rows.row(static_cast<Eigen::Index>(i + n - 2)).transpose(), 1.0);
        sum.selfadjointView<Eigen::Lower>().rankUpdate(
            sample.rows.row(static_cast<Eigen::Index>(i - 2)).transpose(), -1.0);
      }
      Matrix cov = sum.selfadjointView<Eigen::Lower>();
      cov /= static_cast<double>(n);
      packed[i - 1] = scaled_upper(cov, unit);
    }
    WindowSeries series;
    series.n = n;
    series.first_t = n + 1;
    for (std::size_t t = n + 1; t <= N - n + 1; ++t) {
      series.values.push_back((packed[t - n - 1] - packed[t - 1]).cwiseAbs().maxCoeff());
    }
    series.max = *std::max_element(series.values.begin(), series.values.end());
    out.windows.push_back(std::move(series));
  }
  return out;
}

namespace {

std::uint64_t repetition_key(const ScenarioConfig& cfg, std::size_t rep, bool alternative) {
  return split_seed(cfg.seed, 2 * rep + (alternative ? 0 : 1));
}

}  // namespace

BlockCovariance scenario_alternative(const ScenarioConfig& cfg) {
  if (!cfg.tau && cfg.p < 2) return make_block_covariance(cfg.p, {});
  CounterRng rng(split_seed(cfg.sigma_seed, 0xC0FFEE));
  return gen_alternative_cov(cfg.p, rng);
}

Sample scenario_sample(const ScenarioConfig& cfg, const BlockCovariance& alt, std::size_t rep,
                       bool alternative) {
  CounterRng rng(repetition_key(cfg, rep, alternative));
  ScenarioConfig local = cfg;
  if (!alternative) local.tau.reset();
  const CovMatrix identity{Matrix::Identity(cfg.p, cfg.p), 0};
  return gen_sample(local, identity, alt.sigma, rng);
}

namespace {

std::vector<std::size_t> union_windows(const std::vector<std::vector<std::size_t>>& sets) {
  std::vector<std::size_t> all;
  for (const auto& s : sets) all.insert(all.end(), s.begin(), s.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

BootstrapReplicates select(const BootstrapReplicates& reps, const std::vector<std::size_t>& ns) {
  BootstrapReplicates out;
  out.replicates = reps.replicates;
  out.seed = reps.seed;
  out.sample_size = reps.sample_size;
  out.windows = ns;
  for (std::size_t n : ns) out.maxima.push_back(reps.at(n));
  return out;
}

StatisticSeries select(const StatisticSeries& series, const std::vector<std::size_t>& ns) {
  StatisticSeries out;
  for (std::size_t n : ns) out.windows.push_back(series.at(n));
  return out;
}

std::vector<std::size_t> sorted_unique(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

ExperimentReport summarize(const ScenarioConfig& cfg, std::vector<std::size_t> windows,
                           std::vector<RepetitionRecord> records) {
  ExperimentReport rep;
  rep.windows = std::move(windows);
  std::size_t null_reject = 0, null_alarm = 0, alt_reject = 0, alt_alarm = 0, covered = 0;
  double n_hat_sum = 0.0, delay_sum = 0.0;
  std::size_t delays = 0;
  for (const auto& r : records) {
    rep.total_seconds += r.seconds;
    if (r.failed) {
      ++rep.failures;
      continue;
    }
    if (r.alternative) {
      ++rep.alternative_runs;
      if (r.rejected) {
        ++alt_reject;
        n_hat_sum += static_cast<double>(*r.n_hat);
        if (cfg.tau && r.interval->contains(*cfg.tau)) ++covered;
      }
      if (r.alarm) {
        ++alt_alarm;
        if (cfg.tau && r.alarm->time > *cfg.tau) {
          delay_sum += static_cast<double>(r.alarm->time - *cfg.tau);
          ++delays;
        }
      }
    } else {
      ++rep.null_runs;
      if (r.rejected) ++null_reject;
      if (r.alarm) ++null_alarm;
    }
  }
  if (rep.null_runs > 0) {
    rep.type_one = static_cast<double>(null_reject) / static_cast<double>(rep.null_runs);
    rep.online_type_one = static_cast<double>(null_alarm) / static_cast<double>(rep.null_runs);
  }
  if (rep.alternative_runs > 0) {
    const double runs = static_cast<double>(rep.alternative_runs);
    rep.power = static_cast<double>(alt_reject) / runs;
    rep.online_power = static_cast<double>(alt_alarm) / runs;
    if (alt_reject > 0) {
      rep.localization = n_hat_sum / static_cast<double>(alt_reject);
      rep.coverage = static_cast<double>(covered) / static_cast<double>(alt_reject);
    }
    if (delays > 0) rep.mean_delay = delay_sum / static_cast<double>(delays);
  }
  rep.records = std::move(records);
  return rep;
}

}  // namespace

std::vector<ExperimentReport> run_experiment_grid(
    const ScenarioConfig& cfg, const std::vector<std::vector<std::size_t>>& raw_sets) {
  if (raw_sets.empty()) throw usage_error("no window sets given");
  std::vector<std::vector<std::size_t>> sets;
  for (const auto& s : raw_sets) sets.push_back(sorted_unique(s));
  ScenarioConfig base = cfg;
  base.windows = union_windows(sets);
  base.validate();

  const BlockCovariance alt = scenario_alternative(cfg);

  struct Job {
    std::size_t index;
    bool alternative;
  };
  std::vector<Job> jobs;
  const bool run_alt = cfg.tau.has_value();
  const bool run_null = !cfg.tau || cfg.with_null;
  for (std::size_t r = 1; r <= cfg.repetitions; ++r) {
    if (run_alt) jobs.push_back({r, true});
    if (run_null) jobs.push_back({r, false});
  }

  // results[job][set]
  std::vector<std::vector<RepetitionRecord>> results(jobs.size());
  const WindowPlan plan(cfg.N, base.windows);

  parallel_for(jobs.size(), cfg.threads, [&](std::size_t j) {
    const Job job = jobs[j];
    const auto started = std::chrono::steady_clock::now();
    auto& out = results[j];
    out.assign(sets.size(), RepetitionRecord{});
    for (auto& rec : out) {
      rec.index = job.index;
      rec.alternative = job.alternative;
    }
    try {
      const std::uint64_t key = repetition_key(cfg, job.index, job.alternative);
      const Sample sample = scenario_sample(base, alt, job.index, job.alternative);

      const CalibrationContext ctx = cfg.covariance_mode
                                         ? build_covariance_calibration(calibration_rows(sample))
                                         : build_calibration(sample, cfg.est);
      const BootstrapReplicates reps =
          run_bootstrap(ctx, plan, cfg.replicates, split_seed(key, 0xB0075), 1, cfg.alpha);
      const StatisticSeries series = cfg.covariance_mode
                                         ? covariance_diff_statistic(sample, plan)
                                         : statistic_series(sample, plan, ctx.scale, cfg.est, 1);

      for (std::size_t k = 0; k < sets.size(); ++k) {
        ThresholdSet thr = thresholds(select(reps, sets[k]), cfg.alpha);
        const StatisticSeries sub = select(series, sets[k]);
        const DetectionResult det = localize(sub, thr);
        RepetitionRecord& rec = out[k];
        rec.rejected = det.rejected;
        rec.n_hat = det.n_hat;
        rec.tau_hat = det.tau_hat;
        rec.interval = det.interval;
        if (cfg.online == OnlineMode::Monitor && !cfg.covariance_mode) {
          std::size_t next = 0;
          const ObservationSource source = [&]() -> std::optional<std::vector<double>> {
            if (next >= sample.size()) return std::nullopt;
            const auto row = sample.rows.row(static_cast<Eigen::Index>(next++));
            return std::vector<double>(row.data(), row.data() + row.size());
          };
          rec.alarm = monitor_online(source, thr, WindowPlan(cfg.N, sets[k]), ctx.scale, cfg.est);
        } else {
          rec.alarm = first_alarm(sub, thr);
        }
      }
    } catch (const std::exception& e) {
      for (auto& rec : out) {
        rec.failed = true;
        rec.error = e.what();
      }
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    for (auto& rec : out) rec.seconds = secs;
  });

  std::vector<ExperimentReport> reports;
  for (std::size_t k = 0; k < sets.size(); ++k) {
    std::vector<RepetitionRecord> records;
    for (const auto& r : results) records.push_back(r[k]);
    ExperimentReport rep = summarize(cfg, sets[k], std::move(records));
    rep.alternative_k = alt.blocks();
    reports.push_back(std::move(rep));
  }
  return reports;
}

ExperimentReport run_experiment(const ScenarioConfig& cfg) {
  return run_experiment_grid(cfg, {cfg.windows}).front();
}

}  // namespace covshift
