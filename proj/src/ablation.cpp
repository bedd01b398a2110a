#include "mtvssl/ablation.hpp"

#include "mtvssl/dataset.hpp"
#include "mtvssl/probe.hpp"
#include "mtvssl/teacher.hpp"
#include "mtvssl/trainer.hpp"

namespace mtvssl {

Config with_overrides(const Config& config, const std::vector<std::string>& overrides) {
  nlohmann::json doc = config.resolved;
  for (const auto& o : overrides) apply_override(doc, o);
  return config_from_json(doc);
}

AblationResult run_ablation_suite(const Config& config, const std::filesystem::path& out_dir,
                                  std::ostream* progress) {
  AblationResult result;
  for (std::uint64_t seed : config.ablation_seeds) {
    const Config seeded = with_overrides(config, {"seed=" + std::to_string(seed)});
    const DatasetSplits data = load_datasets(seeded);
    if (data.test.empty()) throw std::invalid_argument("ablation needs a test split");
    const std::size_t classes = count_classes(data.train);
    for (Variant v : kAblationVariants) {
      const Config run = with_overrides(
          seeded, {"trainer.variant=" + to_string(v), "trainer.snapshot_interval=0",
                   "trainer.resume_from="});
      const auto dir = out_dir / to_string(v) / ("seed_" + std::to_string(seed));
      write_run_snapshot(run, dir);
      std::unique_ptr<Teacher> teacher;
      if (v != Variant::no_kd) teacher = make_teacher(run.teacher);
      if (progress) *progress << "[ablate] seed " << seed << " variant " << to_string(v) << "\n";
      const auto trained = pretrain(run, data.train, teacher.get(), dir);
      const Model model = model_from_checkpoint(read_checkpoint(trained.final_checkpoint));
      const auto probe = evaluate_model(model, data.train, data.test, classes, run.eval, seed);
      result.rows.push_back({to_string(v), seed, probe.acc_at_1, probe.acc_at_5});
      result.checkpoints.push_back(trained.final_checkpoint);
      if (progress) {
        *progress << "[ablate]   acc@1 " << probe.acc_at_1 << " acc@5 " << probe.acc_at_5 << "\n";
      }
    }
  }
  emit_report(result.rows, out_dir);
  return result;
}

}  // namespace mtvssl
