#include "covshift/io.hpp"

#include "covshift/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace covshift {

namespace {

std::string line_prefix(std::size_t line) { return "line " + std::to_string(line) + ": "; }

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> cells;
  std::size_t begin = 0;
  while (true) {
    const std::size_t end = line.find(delim, begin);
    cells.push_back(line.substr(begin, end == std::string_view::npos ? end : end - begin));
    if (end == std::string_view::npos) break;
    begin = end + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view cell) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return value;
}

bool blank(std::string_view line) { return trim(line).empty(); }

char delimiter(SampleFormat format) { return format == SampleFormat::Tsv ? '\t' : ','; }

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <class T>
void read_opt(const Json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

Json optional_size(const std::optional<std::size_t>& v) { return v ? Json(*v) : Json(nullptr); }
Json optional_double(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

EstimatorConfig estimator_from_json(const Json& j, EstimatorConfig est) {
  if (j.contains("estimator")) est.method = parse_method(j.at("estimator").get<std::string>());
  if (j.contains("lambda") && !j.at("lambda").is_null()) {
    if (j.at("lambda").is_string()) {
      if (j.at("lambda").get<std::string>() != "auto") throw usage_error("lambda must be a number or \"auto\"");
    } else {
      est.lambda = j.at("lambda").get<double>();
    }
  }
  read_opt(j, "center", est.center);
  read_opt(j, "penalize_diagonal", est.glasso.penalize_diagonal);
  read_opt(j, "calibration_penalize_diagonal", est.calibration_penalize_diagonal);
  read_opt(j, "adaptive_eps", est.adaptive_eps);
  if (j.contains("nodewise_threshold") && !j.at("nodewise_threshold").is_null()) {
    est.nodewise_threshold = j.at("nodewise_threshold").get<double>();
  }
  return est;
}

}  // namespace

SampleFormat parse_format(const std::string& name) {
  if (name == "csv") return SampleFormat::Csv;
  if (name == "tsv") return SampleFormat::Tsv;
  throw usage_error("unknown format '" + name + "' (expected csv or tsv)");
}

SampleFormat format_for_path(const std::string& path) {
  const auto dot = path.rfind('.');
  if (dot != std::string::npos) {
    const std::string ext = path.substr(dot + 1);
    if (ext == "tsv" || ext == "tab") return SampleFormat::Tsv;
  }
  return SampleFormat::Csv;
}

SampleStream::SampleStream(std::istream& in, SampleFormat format)
    : in_(in), delim_(delimiter(format)) {}

std::optional<std::vector<double>> SampleStream::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (blank(line)) continue;
    const auto cells = split(line, delim_);
    std::vector<double> values;
    values.reserve(cells.size());
    bool numeric = true;
    for (const auto cell : cells) {
      const auto v = parse_number(cell);
      if (!v) {
        numeric = false;
        break;
      }
      values.push_back(*v);
    }
    if (!numeric) {
      if (first_) {
        first_ = false;  // header
        continue;
      }
      throw data_error(line_prefix(line_) + "non-numeric cell");
    }
    first_ = false;
    for (double v : values) {
      if (!std::isfinite(v)) throw data_error(line_prefix(line_) + "NaN or Inf value");
    }
    if (width_ == 0) {
      width_ = values.size();
    } else if (values.size() != width_) {
      throw data_error(line_prefix(line_) + "expected " + std::to_string(width_) + " fields, found " +
                       std::to_string(values.size()));
    }
    return values;
  }
  return std::nullopt;
}

RowMatrix parse_sample(std::istream& in, SampleFormat format) {
  SampleStream stream(in, format);
  std::vector<std::vector<double>> rows;
  while (auto row = stream.next()) rows.push_back(std::move(*row));
  if (rows.empty()) throw data_error("line 1: empty file");
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return out;
}

RowMatrix read_sample(const std::string& path, SampleFormat format) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open '" + path + "'");
  try {
    return parse_sample(in, format);
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

RowMatrix read_sample(const std::string& path) { return read_sample(path, format_for_path(path)); }

void write_sample(std::ostream& out, const RowMatrix& rows, SampleFormat format) {
  const char delim = delimiter(format);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      if (j > 0) out << delim;
      out << format_double(rows(i, j));
    }
    out << '\n';
  }
}

void write_sample(const std::string& path, const RowMatrix& rows, SampleFormat format) {
  std::ofstream out(path);
  if (!out) throw usage_error("cannot write '" + path + "'");
  write_sample(out, rows, format);
}

Json to_json(const ThresholdSet& thr) {
  Json j;
  j["alpha"] = thr.alpha;
  j["alpha_star"] = thr.alpha_star;
  j["B"] = thr.replicates;
  j["seed"] = thr.seed;
  j["resolution"] = thr.replicates > 0 ? 1.0 / static_cast<double>(thr.replicates) : 0.0;
  j["N"] = thr.sample_size;
  Json windows = Json::array();
  for (const auto& w : thr.windows) windows.push_back({{"n", w.n}, {"threshold", w.threshold}});
  j["windows"] = windows;
  return j;
}

ThresholdSet threshold_set_from_json(const Json& j) {
  try {
    ThresholdSet thr;
    thr.alpha = j.at("alpha").get<double>();
    thr.alpha_star = j.at("alpha_star").get<double>();
    thr.replicates = j.at("B").get<std::size_t>();
    thr.seed = j.at("seed").get<std::uint64_t>();
    read_opt(j, "N", thr.sample_size);
    for (const auto& w : j.at("windows")) {
      thr.windows.push_back({w.at("n").get<std::size_t>(), w.at("threshold").get<double>()});
    }
    std::sort(thr.windows.begin(), thr.windows.end(),
              [](const WindowThreshold& a, const WindowThreshold& b) { return a.n < b.n; });
    if (thr.windows.empty()) throw data_error("thresholds: empty window list");
    return thr;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("thresholds: ") + e.what());
  }
}

ThresholdSet read_thresholds(const std::string& path) {
  return threshold_set_from_json(read_json(path));
}

Json to_json(const DetectionResult& result) {
  Json j;
  j["rejected"] = result.rejected;
  j["n_hat"] = optional_size(result.n_hat);
  j["tau_hat"] = optional_size(result.tau_hat);
  j["interval"] = result.interval ? Json::array({result.interval->first, result.interval->last})
                                  : Json(nullptr);
  Json per = Json::array();
  for (const auto& d : result.per_window) {
    per.push_back({{"n", d.n}, {"A_n", d.statistic}, {"threshold", d.threshold}});
  }
  j["per_window"] = per;
  return j;
}

Json to_json(const ExperimentReport& report) {
  Json j;
  j["windows"] = report.windows;
  j["R"] = report.records.size();
  j["null_runs"] = report.null_runs;
  j["alternative_runs"] = report.alternative_runs;
  j["failures"] = report.failures;
  j["alternative_blocks"] = report.alternative_k;
  j["type_one"] = optional_double(report.type_one);
  j["power"] = optional_double(report.power);
  j["localization"] = optional_double(report.localization);
  j["coverage"] = optional_double(report.coverage);
  j["online_type_one"] = optional_double(report.online_type_one);
  j["online_power"] = optional_double(report.online_power);
  j["mean_delay"] = optional_double(report.mean_delay);
  j["total_seconds"] = report.total_seconds;
  Json records = Json::array();
  for (const auto& r : report.records) {
    Json rec;
    rec["index"] = r.index;
    rec["hypothesis"] = r.alternative ? "alternative" : "null";
    rec["failed"] = r.failed;
    if (r.failed) rec["error"] = r.error;
    rec["rejected"] = r.rejected;
    rec["n_hat"] = optional_size(r.n_hat);
    rec["tau_hat"] = optional_size(r.tau_hat);
    rec["interval"] =
        r.interval ? Json::array({r.interval->first, r.interval->last}) : Json(nullptr);
    rec["alarm"] = r.alarm ? Json{{"time", r.alarm->time}, {"n", r.alarm->n}, {"t", r.alarm->t}}
                           : Json(nullptr);
    rec["seconds"] = r.seconds;
    records.push_back(rec);
  }
  j["records"] = records;
  return j;
}

void write_series_csv(std::ostream& out, const StatisticSeries& series) {
  std::vector<const WindowSeries*> order;
  for (const auto& w : series.windows) order.push_back(&w);
  std::sort(order.begin(), order.end(),
            [](const WindowSeries* a, const WindowSeries* b) { return a->n < b->n; });
  out << "n,t,A\n";
  for (const WindowSeries* w : order) {
    for (std::size_t k = 0; k < w->values.size(); ++k) {
      out << w->n << ',' << w->first_t + k << ',' << format_double(w->values[k]) << '\n';
    }
  }
}

void write_report_csv(std::ostream& out, const ExperimentReport& report) {
  out << "index,hypothesis,failed,rejected,n_hat,tau_hat,interval_first,interval_last,"
         "alarm_time,alarm_n,seconds\n";
  const auto opt = [](const std::optional<std::size_t>& v) {
    return v ? std::to_string(*v) : std::string();
  };
  for (const auto& r : report.records) {
    out << r.index << ',' << (r.alternative ? "alternative" : "null") << ',' << r.failed << ','
        << r.rejected << ',' << opt(r.n_hat) << ',' << opt(r.tau_hat) << ','
        << (r.interval ? std::to_string(r.interval->first) : "") << ','
        << (r.interval ? std::to_string(r.interval->last) : "") << ','
        << (r.alarm ? std::to_string(r.alarm->time) : "") << ','
        << (r.alarm ? std::to_string(r.alarm->n) : "") << ',' << format_double(r.seconds) << '\n';
  }
}

void RunConfig::validate() const {
  if (input.empty()) throw usage_error("config: input path is required");
  if (windows.empty()) throw usage_error("config: windows must be a non-empty list");
  for (std::size_t n : windows) {
    if (n < 2) throw usage_error("config: window sizes must be at least 2");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw usage_error("config: alpha must lie in (0, 1)");
  if (replicates < minimum_replicates(alpha)) {
    throw usage_error("config: B=" + std::to_string(replicates) + " is below ceil(10/alpha)=" +
                      std::to_string(minimum_replicates(alpha)));
  }
  if (calibration && calibration_file) {
    throw usage_error("config: give either a calibration range or a calibration file");
  }
  if (!calibration && !calibration_file) throw usage_error("config: calibration set is required");
  if (calibration && (calibration->first < 1 || calibration->last < calibration->first + 1)) {
    throw usage_error("config: calibration range needs first >= 1 and at least two points");
  }
  if (est.lambda && *est.lambda < 0.0) throw usage_error("config: lambda must be non-negative");
}

RunConfig run_config_from_json(const Json& j) {
  try {
    RunConfig cfg;
    read_opt(j, "input", cfg.input);
    if (j.contains("format")) cfg.format = parse_format(j.at("format").get<std::string>());
    if (j.contains("calibration")) {
      const Json& c = j.at("calibration");
      if (c.contains("file")) {
        cfg.calibration_file = c.at("file").get<std::string>();
      } else {
        cfg.calibration = IndexRange{c.at("first").get<std::size_t>(), c.at("last").get<std::size_t>()};
      }
    }
    read_opt(j, "windows", cfg.windows);
    read_opt(j, "alpha", cfg.alpha);
    read_opt(j, "B", cfg.replicates);
    read_opt(j, "seed", cfg.seed);
    cfg.est = estimator_from_json(j, cfg.est);
    if (j.contains("threads") && !j.at("threads").is_null()) {
      cfg.threads = j.at("threads").get<std::size_t>();
    }
    if (j.contains("outputs")) {
      read_opt(j.at("outputs"), "out", cfg.out);
      read_opt(j.at("outputs"), "series", cfg.series_out);
    }
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw usage_error(std::string("config: ") + e.what());
  }
}

ScenarioConfig scenario_from_json(const Json& j) {
  try {
    ScenarioConfig cfg;
    read_opt(j, "p", cfg.p);
    read_opt(j, "N", cfg.N);
    if (j.contains("tau") && !j.at("tau").is_null()) cfg.tau = j.at("tau").get<std::size_t>();
    read_opt(j, "s", cfg.s);
    read_opt(j, "windows", cfg.windows);
    read_opt(j, "alpha", cfg.alpha);
    read_opt(j, "B", cfg.replicates);
    read_opt(j, "reps", cfg.repetitions);
    read_opt(j, "seed", cfg.seed);
    read_opt(j, "sigma_seed", cfg.sigma_seed);
    read_opt(j, "with_null", cfg.with_null);
    read_opt(j, "covariance_mode", cfg.covariance_mode);
    if (j.contains("online")) {
      const auto mode = j.at("online").get<std::string>();
      if (mode == "monitor") {
        cfg.online = OnlineMode::Monitor;
      } else if (mode == "replay") {
        cfg.online = OnlineMode::Replay;
      } else {
        throw usage_error("scenario: online must be \"monitor\" or \"replay\"");
      }
    }
    cfg.est = estimator_from_json(j, cfg.est);
    read_opt(j, "threads", cfg.threads);
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw usage_error(std::string("scenario: ") + e.what());
  }
}

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw usage_error(path + ": " + e.what());
  }
}

void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw usage_error("cannot write '" + path + "'");
  out << text;
}

}  // namespace covshift
