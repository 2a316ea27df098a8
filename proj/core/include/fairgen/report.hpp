#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairgen/eval.hpp"

namespace fairgen {

/// Shortest decimal text that reads back to exactly `v`.
std::string format_double(double v);

struct ReportRow {
  std::string run_id;
  double rho = 0.0;
  int tau = 0;
  std::string dist;
  std::uint64_t seed = 0;
  FairnessReport metrics;
};

/// Header and column order of report.csv.
extern const char* const kReportColumns;

std::string report_csv(const std::vector<ReportRow>& rows);
nlohmann::json report_row_to_json(const ReportRow& row);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (0 for a single value)
};

/// Mean and standard deviation of every metric over `rows`, keyed by the
/// report column names.
nlohmann::json summarize(const std::vector<ReportRow>& rows);
MetricSummary summarize(const std::vector<double>& values);

void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace fairgen
