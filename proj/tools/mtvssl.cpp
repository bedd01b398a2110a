// mtvssl: data generation, pre-training, probing, ablation, CAM visualisation
// and checkpoint inspection behind one JSON config with dotted overrides.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mtvssl/ablation.hpp"
#include "mtvssl/cam.hpp"
#include "mtvssl/checkpoint.hpp"
#include "mtvssl/config.hpp"
#include "mtvssl/dataset.hpp"
#include "mtvssl/frame_directory.hpp"
#include "mtvssl/probe.hpp"
#include "mtvssl/report.hpp"
#include "mtvssl/teacher.hpp"
#include "mtvssl/trainer.hpp"

namespace fs = std::filesystem;
using namespace mtvssl;
using nlohmann::json;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", args.overrides, "Override a config key: key.path=value (repeatable)")
      ->take_all();
  cmd->add_option("--out", args.out, "Output directory (sets output_dir)");
}

Config resolve(const CommonArgs& args) {
  std::vector<std::string> overrides = args.overrides;
  if (!args.out.empty()) overrides.push_back("output_dir=" + args.out);
  std::optional<std::string> env_seed;
  if (const char* s = std::getenv("MTVSSL_SEED")) env_seed = s;
  return load_config(args.config, overrides, env_seed);
}

Model load_model(const Config& config) {
  if (config.eval.checkpoint.empty()) {
    throw ConfigError("eval.checkpoint must name a checkpoint (e.g. --set eval.checkpoint=run/model.mtvc)");
  }
  return model_from_checkpoint(read_checkpoint(config.eval.checkpoint));
}

int cmd_generate_data(const Config& config) {
  if (config.data.source != "synthetic") throw ConfigError("generate-data needs data.source=synthetic");
  const fs::path out = config.output_dir;
  write_run_snapshot(config, out);
  const auto splits = load_datasets(config);
  const fs::path data = out / "data";
  const auto train_manifest = write_frame_directory(splits.train, data);
  fs::rename(train_manifest, data / "train_manifest.tsv");
  const auto test_manifest = write_frame_directory(splits.test, data);
  fs::rename(test_manifest, data / "test_manifest.tsv");

  std::vector<SourceVideo> all = splits.train;
  all.insert(all.end(), splits.test.begin(), splits.test.end());
  TeacherSpec spec = config.teacher;
  if (spec.kind == TeacherKind::file) spec.kind = TeacherKind::oracle;
  const auto teacher = make_teacher(spec);
  const auto teacher_manifest = export_maps(all, *teacher, out / "teacher");

  std::cout << "wrote " << splits.train.size() << " train and " << splits.test.size()
            << " test videos under " << data.string() << "\n"
            << "teacher maps: " << teacher_manifest.string() << "\n"
            << "use with: --set data.source=directory --set data.root=" << data.string()
            << " --set data.manifest=" << (data / "train_manifest.tsv").string()
            << " --set data.test_manifest=" << (data / "test_manifest.tsv").string()
            << " --set teacher.kind=file --set teacher.manifest=" << teacher_manifest.string()
            << "\n";
  return 0;
}

int cmd_pretrain(const Config& config) {
  const fs::path out = config.output_dir;
  write_run_snapshot(config, out);
  const auto splits = load_datasets(config);
  std::unique_ptr<Teacher> teacher;
  if (config.trainer.variant != Variant::no_kd) teacher = make_teacher(config.teacher);
  const auto result = pretrain(config, splits.train, teacher.get(), out);
  if (!result.metrics.empty()) {
    const auto& first = result.metrics.front();
    const auto& last = result.metrics.back();
    std::cout << "variant " << to_string(config.trainer.variant) << ": steps " << first.step << ".."
              << last.step << ", total loss " << first.total << " -> " << last.total << "\n";
  }
  std::cout << "checkpoint: " << result.final_checkpoint.string() << "\n"
            << "metrics: " << result.metrics_log.string() << "\n";
  return 0;
}

int cmd_probe(const Config& config) {
  const fs::path out = config.output_dir;
  write_run_snapshot(config, out);
  const Model model = load_model(config);
  const auto splits = load_datasets(config);
  if (splits.test.empty()) throw ConfigError("probing needs a test split (data.test_manifest)");
  const auto r = evaluate_model(model, splits.train, splits.test, count_classes(splits.train),
                                config.eval, config.seed);
  emit_report({{r.variant, r.seed, r.acc_at_1, r.acc_at_5}}, out);
  json detail = {{"variant", r.variant},
                 {"seed", r.seed},
                 {"num_classes", r.num_classes},
                 {"acc_at_1", r.acc_at_1},
                 {"acc_at_5", r.acc_at_5},
                 {"per_class_accuracy", r.per_class_accuracy},
                 {"mode", config.eval.mode == ProbeMode::linear ? "linear" : "finetune"}};
  std::ofstream(out / "probe.json") << detail.dump(2) << "\n";
  std::cout << r.variant << " acc@1 " << r.acc_at_1 << " acc@5 " << r.acc_at_5 << "\n";
  return 0;
}

int cmd_ablate(const Config& config) {
  const fs::path out = config.output_dir;
  write_run_snapshot(config, out);
  const auto result = run_ablation_suite(config, out, &std::cerr);
  std::cout << format_report_table(result.rows);
  return 0;
}

int cmd_visualize(const Config& config) {
  const fs::path out = config.output_dir;
  write_run_snapshot(config, out);
  const Model model = load_model(config);
  const auto splits = load_datasets(config);
  const auto& videos = splits.test.empty() ? splits.train : splits.test;
  const std::size_t classes = count_classes(splits.train);
  const auto probe = train_cam_probe(model, splits.train, config.eval, classes);
  const auto& mc = model.config();
  fs::create_directories(out / "overlays");
  std::size_t written = 0;
  for (std::size_t v = 0; v < videos.size() && written < config.eval.cam_clips; ++v) {
    const auto clip =
        evaluation_clips(videos[v], config.eval.eval_speed, mc.clip_length, 1, mc.input_height,
                         mc.input_width)
            .front();
    const auto cam = cam_heatmap(model, probe, clip, std::size_t(videos[v].action_label));
    const std::size_t pos = middle_position(clip.length());
    Tensor frame({clip.frames.dim(1), clip.frames.dim(2), 3});
    std::copy_n(clip.frames.data() + pos * frame.size(), frame.size(), frame.data());
    write_png(out / "overlays" / overlay_filename(cam.video_id, cam.frame_index, cam.class_id),
              render_overlay(frame, cam.heat, config.eval.overlay_alpha));
    ++written;
  }
  json summary = {{"overlays", written}};
  bool has_gt = !videos.empty();
  for (const auto& v : videos) has_gt = has_gt && v.parsing_gt.has_value();
  if (has_gt) {
    const auto focus = measure_cam_focus(model, probe, videos, config.eval);
    summary["clips"] = focus.clips;
    summary["actor_focused"] = focus.focused;
    summary["actor_focused_fraction"] = focus.fraction();
    std::cout << "CAM actor focus: " << focus.focused << "/" << focus.clips << " clips\n";
  }
  std::ofstream(out / "cam_summary.json") << summary.dump(2) << "\n";
  std::cout << "wrote " << written << " overlays to " << (out / "overlays").string() << "\n";
  return 0;
}

int cmd_inspect(const std::string& path) {
  const Checkpoint ck = read_checkpoint(path);
  const auto& meta = ck.metadata;
  std::cout << "format_version: " << meta.value("format_version", 0) << "\n"
            << "variant: " << meta.value("variant", std::string("?")) << "\n"
            << "step: " << meta.value("step", 0) << "\n"
            << "seed: " << meta.value("seed", 0) << "\n"
            << "config_hash: " << meta.value("config_hash", std::string("?")) << "\n"
            << "precision: " << meta.value("precision", std::string("?")) << "\n";
  if (meta.contains("representation_dim")) {
    std::cout << "representation_dim: " << meta["representation_dim"] << "\n";
  }
  std::size_t total = 0;
  std::cout << "parameters:\n";
  for (const auto* a : ck.with_prefix("model/")) {
    std::cout << "  " << a->name.substr(6) << " " << shape_to_string(a->value.shape()) << "\n";
    total += a->value.size();
  }
  std::cout << "parameter_count: " << total << "\n";
  std::size_t other = 0;
  for (const auto& a : ck.arrays) {
    if (a.name.rfind("model/", 0) != 0) ++other;
  }
  std::cout << "training_state_arrays: " << other << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task self-supervised video representation learning"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  CommonArgs common;
  auto* gen = app.add_subcommand("generate-data", "Write the synthetic corpus and teacher maps to disk");
  auto* pre = app.add_subcommand("pretrain", "Pre-train one variant");
  auto* probe = app.add_subcommand("probe", "Linear-probe (or fine-tune) a checkpoint");
  auto* ablate = app.add_subcommand("ablate", "Train and probe full / task_independent / no_kd");
  auto* vis = app.add_subcommand("visualize", "Write CAM overlays for a checkpoint");
  for (auto* cmd : {gen, pre, probe, ablate, vis}) add_common(cmd, common);
  std::string ckpt_path;
  auto* inspect = app.add_subcommand("inspect-checkpoint", "Summarise a checkpoint file");
  inspect->add_option("path", ckpt_path, "Checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitValidation;
  }

  try {
    if (inspect->parsed()) return cmd_inspect(ckpt_path);
    const Config config = resolve(common);
    if (gen->parsed()) return cmd_generate_data(config);
    if (pre->parsed()) return cmd_pretrain(config);
    if (probe->parsed()) return cmd_probe(config);
    if (ablate->parsed()) return cmd_ablate(config);
    if (vis->parsed()) return cmd_visualize(config);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}
