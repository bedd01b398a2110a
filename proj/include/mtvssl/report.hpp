#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace mtvssl {

struct ReportRow {
  std::string variant;
  std::uint64_t seed = 0;
  double acc1 = 0.0;  // fractions in [0, 1]
  double acc5 = 0.0;
};

// Full-scale reference accuracies (C3D backbone, Kinetics-400 pre-training,
// UCF101 fine-tuning) for the three ablation variants, as fractions. They
// document the expected ordering only; toy-scale runs are not comparable.
struct ReferenceAccuracy {
  double acc1 = 0.0;
  double acc5 = 0.0;
};
std::optional<ReferenceAccuracy> reference_accuracy(const std::string& variant);

struct VariantSummary {
  std::string variant;
  std::size_t seeds = 0;
  double mean_acc1 = 0.0;
  double mean_acc5 = 0.0;
};
// One entry per variant, in first-appearance order.
std::vector<VariantSummary> summarize_rows(const std::vector<ReportRow>& rows);

nlohmann::json report_to_json(const std::vector<ReportRow>& rows);
std::vector<ReportRow> report_from_json(const nlohmann::json& report);

// Writes report.csv (header `variant,seed,acc1,acc5`) and report.json into dir.
// The JSON is checked against the published report schema before writing.
void emit_report(const std::vector<ReportRow>& rows, const std::filesystem::path& dir);
std::vector<ReportRow> read_report_csv(const std::filesystem::path& path);

// Human-readable table: per-variant toy means next to the reference numbers.
std::string format_report_table(const std::vector<ReportRow>& rows);

}  // namespace mtvssl
