#pragma once

// File formats and run configuration: delimited sample files, JSON for
// thresholds, results, reports and configs, CSV for series and per-run rows.

#include "covshift/bootstrap.hpp"
#include "covshift/detector.hpp"
#include "covshift/simulate.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace covshift {

using Json = nlohmann::ordered_json;

enum class SampleFormat { Csv, Tsv };

SampleFormat parse_format(const std::string& name);
/// tsv for a .tsv/.tab extension, csv otherwise.
SampleFormat format_for_path(const std::string& path);

/// Rows of numbers; a non-numeric first line is taken as a header.
RowMatrix parse_sample(std::istream& in, SampleFormat format);
RowMatrix read_sample(const std::string& path, SampleFormat format);
RowMatrix read_sample(const std::string& path);

void write_sample(std::ostream& out, const RowMatrix& rows, SampleFormat format = SampleFormat::Csv);
void write_sample(const std::string& path, const RowMatrix& rows,
                  SampleFormat format = SampleFormat::Csv);

/// Incremental reader used by the online monitor.
class SampleStream {
 public:
  SampleStream(std::istream& in, SampleFormat format);

  /// Next observation, or nullopt at end of input.
  std::optional<std::vector<double>> next();

 private:
  std::istream& in_;
  char delim_;
  std::size_t line_ = 0;
  std::size_t width_ = 0;
  bool first_ = true;
};

Json to_json(const ThresholdSet& thr);
ThresholdSet threshold_set_from_json(const Json& j);
ThresholdSet read_thresholds(const std::string& path);

Json to_json(const DetectionResult& result);
Json to_json(const ExperimentReport& report);

/// Columns n,t,A sorted by (n, t).
void write_series_csv(std::ostream& out, const StatisticSeries& series);
/// One row per repetition.
void write_report_csv(std::ostream& out, const ExperimentReport& report);

struct RunConfig {
  std::string input;
  std::optional<SampleFormat> format;
  /// Calibration rows inside the input (1-based, inclusive) ...
  std::optional<IndexRange> calibration;
  /// ... or a separate file.
  std::optional<std::string> calibration_file;
  std::vector<std::size_t> windows;
  double alpha = 0.05;
  std::size_t replicates = 1000;
  std::uint64_t seed = 1;
  EstimatorConfig est;
  std::optional<std::size_t> threads;
  std::string out;
  std::string series_out;

  /// Checks everything that does not need the data.
  void validate() const;
};

RunConfig run_config_from_json(const Json& j);
ScenarioConfig scenario_from_json(const Json& j);

Json read_json(const std::string& path);
/// Writes `j` pretty-printed with a trailing newline.
void write_json(const std::string& path, const Json& j);
void write_text(const std::string& path, const std::string& text);

}  // namespace covshift
