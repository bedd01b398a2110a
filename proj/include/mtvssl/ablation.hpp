#pragma once

#include <filesystem>
#include <ostream>
#include <vector>

#include "mtvssl/config.hpp"
#include "mtvssl/report.hpp"

namespace mtvssl {

struct AblationResult {
  std::vector<ReportRow> rows;
  std::vector<std::filesystem::path> checkpoints;
};

// For every seed in ablation.seeds: pre-trains full, no_kd and
// task_independent from the same initial weights and data, probes each, and
// writes <out>/<variant>/seed_<s>/model.mtvc plus <out>/report.{csv,json}.
AblationResult run_ablation_suite(const Config& config, const std::filesystem::path& out_dir,
                                  std::ostream* progress = nullptr);

inline constexpr Variant kAblationVariants[] = {Variant::full, Variant::task_independent,
                                                Variant::no_kd};

// Copy of `config` with dotted overrides applied and re-validated.
Config with_overrides(const Config& config, const std::vector<std::string>& overrides);

}  // namespace mtvssl
