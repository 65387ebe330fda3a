#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "opfbench/metrics.hpp"

namespace opfbench {

/// Metrics for one method, possibly over several seeds.
struct MethodMetrics {
  std::string method;
  std::vector<RegressionMetrics> regression;  // one entry per seed
  std::vector<PowerMetrics> power;            // empty when not computed
};

struct MetricsReport {
  std::string dataset_name;
  std::string case_fingerprint;
  std::string split = "test";
  std::vector<MethodMetrics> methods;
};

enum class ReportFormat { Markdown, Csv };

/// One regression table and, when any method carries power metrics, one
/// power table. Multi-seed methods render mean +- std.
std::string emit_report(const MetricsReport& report, ReportFormat format);

std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);
void save_report(const MetricsReport& report, const std::filesystem::path& path);
MetricsReport load_report(const std::filesystem::path& path);

/// Expectations file: JSON array of {"method", "metric", "max"?, "min"?}.
/// Returns human-readable violation strings (empty means all pass).
std::vector<std::string> check_expectations(const MetricsReport& report,
                                            const std::string& expectations_json);

}  // namespace opfbench
