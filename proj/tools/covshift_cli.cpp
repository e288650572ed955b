// Command-line front end: calibrate, detect, monitor, simulate, bench.

#include "covshift/bootstrap.hpp"
#include "covshift/detector.hpp"
#include "covshift/error.hpp"
#include "covshift/io.hpp"
#include "covshift/parallel.hpp"
#include "covshift/simulate.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace covshift;

namespace {

constexpr int kExitNoAlarm = 3;

// Flags that override fields of a run config.
struct Overrides {
  std::string config;
  std::string input;
  std::string format;
  std::vector<std::size_t> windows;
  std::optional<double> alpha;
  std::optional<std::size_t> replicates;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::string estimator;
  bool center = false;
  std::optional<std::size_t> threads;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--config", config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd.add_option("--input", input, "sample file");
    cmd.add_option("--format", format, "csv or tsv");
    cmd.add_option("--windows", windows, "window sizes");
    cmd.add_option("--alpha", alpha, "significance level");
    cmd.add_option("--B", replicates, "bootstrap replicates");
    cmd.add_option("--seed", seed, "master seed");
    cmd.add_option("--lambda", lambda, "fixed penalty (default sqrt(log p / n))");
    cmd.add_option("--estimator", estimator,
                   "glasso, adaptive, nodewise, nodewise-thresholded or exact-inverse");
    cmd.add_flag("--center", center, "subtract window means");
    cmd.add_option("--threads", threads, "worker threads (default: COVSHIFT_THREADS or all cores)");
  }

  RunConfig load() const {
    RunConfig cfg = run_config_from_json(read_json(config));
    if (!input.empty()) cfg.input = input;
    if (!format.empty()) cfg.format = parse_format(format);
    if (!windows.empty()) cfg.windows = windows;
    if (alpha) cfg.alpha = *alpha;
    if (replicates) cfg.replicates = *replicates;
    if (seed) cfg.seed = *seed;
    if (lambda) cfg.est.lambda = *lambda;
    if (!estimator.empty()) cfg.est.method = parse_method(estimator);
    if (center) cfg.est.center = true;
    if (threads) cfg.threads = *threads;
    cfg.validate();
    return cfg;
  }
};

std::size_t threads_of(const RunConfig& cfg) { return resolve_threads(cfg.threads.value_or(0)); }

RowMatrix load_rows(const std::string& path, const RunConfig& cfg) {
  return read_sample(path, cfg.format.value_or(format_for_path(path)));
}

struct Loaded {
  Sample sample;
  CalibrationContext ctx;
};

// Reads the input and fits the calibration estimate.
Loaded load(const RunConfig& cfg) {
  RowMatrix rows = load_rows(cfg.input, cfg);
  Loaded out;
  if (cfg.calibration) {
    out.sample = make_sample(std::move(rows), cfg.calibration->first, cfg.calibration->last);
    out.ctx = build_calibration(out.sample, cfg.est);
  } else {
    RowMatrix cal = load_rows(*cfg.calibration_file, cfg);
    if (cal.cols() != rows.cols()) throw data_error("calibration file has a different dimension");
    out.sample = Sample{std::move(rows), {}};
    out.ctx = build_calibration(cal, cfg.est);
  }
  return out;
}

void check_thresholds(const ThresholdSet& thr, const RunConfig& cfg, std::size_t N) {
  std::vector<std::size_t> windows = cfg.windows;
  std::sort(windows.begin(), windows.end());
  windows.erase(std::unique(windows.begin(), windows.end()), windows.end());
  if (thr.window_sizes() != windows) {
    throw usage_error("window-set mismatch between config and thresholds");
  }
  if (thr.sample_size != 0 && thr.sample_size != N) {
    throw usage_error("thresholds were calibrated for N=" + std::to_string(thr.sample_size) +
                      ", sample has N=" + std::to_string(N));
  }
}

int run_calibrate(const Overrides& o, const std::string& out_path) {
  const RunConfig cfg = o.load();
  const std::string out = out_path.empty() ? cfg.out : out_path;
  if (out.empty()) throw usage_error("no output path (--out)");
  const Loaded data = load(cfg);
  const WindowPlan plan(data.sample.size(), cfg.windows);
  const BootstrapReplicates reps =
      run_bootstrap(data.ctx, plan, cfg.replicates, cfg.seed, threads_of(cfg), cfg.alpha);
  write_json(out, to_json(thresholds(reps, cfg.alpha)));
  return 0;
}

int run_detect(const Overrides& o, const std::string& thr_path, const std::string& out_path,
               const std::string& series_path) {
  const RunConfig cfg = o.load();
  const std::string out = out_path.empty() ? cfg.out : out_path;
  const std::string series_out = series_path.empty() ? cfg.series_out : series_path;
  if (out.empty()) throw usage_error("no output path (--out)");
  const ThresholdSet thr = read_thresholds(thr_path);
  const Loaded data = load(cfg);
  check_thresholds(thr, cfg, data.sample.size());
  const WindowPlan plan(data.sample.size(), cfg.windows);
  const StatisticSeries series =
      statistic_series(data.sample, plan, data.ctx.scale, cfg.est, threads_of(cfg));
  write_json(out, to_json(localize(series, thr)));
  if (!series_out.empty()) {
    std::ostringstream csv;
    write_series_csv(csv, series);
    write_text(series_out, csv.str());
  }
  return 0;
}

int run_monitor(const Overrides& o, const std::string& thr_path, const std::string& follow) {
  const RunConfig cfg = o.load();
  const ThresholdSet thr = read_thresholds(thr_path);
  if (thr.sample_size == 0) throw usage_error("thresholds carry no horizon N");
  RowMatrix cal_rows;
  if (cfg.calibration) {
    const RowMatrix rows = load_rows(cfg.input, cfg);
    if (cfg.calibration->last > static_cast<std::size_t>(rows.rows())) {
      throw data_error("calibration range exceeds the input");
    }
    cal_rows = rows.middleRows(static_cast<Eigen::Index>(cfg.calibration->first - 1),
                               static_cast<Eigen::Index>(cfg.calibration->size()));
  } else {
    cal_rows = load_rows(*cfg.calibration_file, cfg);
  }
  const CalibrationContext ctx = build_calibration(cal_rows, cfg.est);
  check_thresholds(thr, cfg, thr.sample_size);
  OnlineMonitor monitor(thr, WindowPlan(thr.sample_size, cfg.windows), ctx.scale, cfg.est);

  std::ifstream file;
  if (follow != "-") {
    file.open(follow);
    if (!file) throw data_error("cannot open '" + follow + "'");
  }
  std::istream& in = follow == "-" ? std::cin : file;
  SampleStream stream(in, cfg.format.value_or(format_for_path(follow)));
  while (monitor.time() < monitor.horizon()) {
    const auto x = stream.next();
    if (!x) break;
    if (const auto alarm = monitor.push(*x)) {
      std::cout << "ALARM t=" << alarm->time << " n=" << alarm->n << std::endl;
      return 0;
    }
  }
  std::cout << "no alarm after " << monitor.time() << " observations" << std::endl;
  return kExitNoAlarm;
}

ScenarioConfig load_scenario(const std::string& path, std::optional<std::size_t> threads) {
  ScenarioConfig cfg = scenario_from_json(read_json(path));
  if (threads) cfg.threads = *threads;
  cfg.validate();
  return cfg;
}

int run_simulate(const std::string& scenario, const std::string& out, bool null_sample) {
  const ScenarioConfig cfg = load_scenario(scenario, std::nullopt);
  const bool alternative = cfg.tau.has_value() && !null_sample;
  const Sample sample = scenario_sample(cfg, scenario_alternative(cfg), 1, alternative);
  write_sample(out, sample.rows, format_for_path(out));
  return 0;
}

int run_bench(const std::string& scenario, std::optional<std::size_t> reps, const std::string& out,
              const std::string& csv_out, std::optional<std::size_t> threads) {
  ScenarioConfig cfg = load_scenario(scenario, threads);
  if (reps) cfg.repetitions = *reps;
  cfg.validate();
  const ExperimentReport report = run_experiment(cfg);
  write_json(out, to_json(report));
  if (!csv_out.empty()) {
    std::ostringstream csv;
    write_report_csv(csv, report);
    write_text(csv_out, csv.str());
  }
  return 0;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
      return 1;
    case ErrorKind::Data:
      return 2;
    case ErrorKind::Numerical:
      return 4;
  }
  return 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Change detection in high-dimensional precision matrices"};
  app.require_subcommand(1);

  Overrides cal_o, det_o, mon_o;
  std::string out, thr_path, series, follow, scenario, csv_out;
  std::optional<std::size_t> reps, threads;
  bool null_sample = false;

  auto* calibrate = app.add_subcommand("calibrate", "bootstrap thresholds for a run config");
  cal_o.add_to(*calibrate);
  calibrate->add_option("--out", out, "thresholds JSON");

  auto* detect = app.add_subcommand("detect", "offline detection and localization");
  det_o.add_to(*detect);
  detect->add_option("--thresholds", thr_path, "thresholds JSON")->required()->check(CLI::ExistingFile);
  detect->add_option("--out", out, "result JSON");
  detect->add_option("--series", series, "A_n(t) series CSV");

  auto* monitor = app.add_subcommand("monitor", "online monitoring of a stream");
  mon_o.add_to(*monitor);
  monitor->add_option("--thresholds", thr_path, "thresholds JSON")->required()->check(CLI::ExistingFile);
  monitor->add_option("--follow", follow, "observation stream (file or - for stdin)")->required();

  auto* simulate = app.add_subcommand("simulate", "draw one sample of a scenario");
  simulate->add_option("--scenario", scenario, "scenario JSON")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", out, "sample CSV")->required();
  simulate->add_flag("--null", null_sample, "draw the no-change sample even when tau is set");

  auto* bench = app.add_subcommand("bench", "Monte Carlo experiment");
  bench->add_option("--scenario", scenario, "scenario JSON")->required()->check(CLI::ExistingFile);
  bench->add_option("--reps", reps, "repetitions (overrides the scenario)");
  bench->add_option("--out", out, "report JSON")->required();
  bench->add_option("--csv", csv_out, "per-repetition CSV");
  bench->add_option("--threads", threads, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*calibrate) return run_calibrate(cal_o, out);
    if (*detect) return run_detect(det_o, thr_path, out, series);
    if (*monitor) return run_monitor(mon_o, thr_path, follow);
    if (*simulate) return run_simulate(scenario, out, null_sample);
    if (*bench) return run_bench(scenario, reps, out, csv_out, threads);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 1;
}
