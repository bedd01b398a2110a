#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtvssl/checkpoint.hpp"
#include "mtvssl/losses.hpp"
#include "mtvssl/model.hpp"
#include "mtvssl/synthetic.hpp"
#include "mtvssl/teacher.hpp"
#include "mtvssl/video.hpp"

namespace mtvssl {

// Any invalid configuration or override. The CLI maps it to exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" | "directory"
  std::filesystem::path root;
  std::filesystem::path manifest;
  std::filesystem::path test_manifest;
  SceneConfig scene;
  std::size_t train_videos_per_action = 25;
  std::size_t test_videos_per_action = 8;
};

enum class Optimizer { sgd, adam };

struct TrainConfig {
  Variant variant = Variant::full;
  std::size_t epochs = 40;
  std::size_t max_steps = 0;  // 0 = unlimited
  std::size_t batch_size = 8;
  double base_lr = 0.001;
  std::vector<std::size_t> lr_milestones{30};  // epochs at which the LR is multiplied by lr_decay
  double lr_decay = 0.1;
  Optimizer optimizer = Optimizer::adam;
  double momentum = 0.9;  // SGD momentum or Adam beta1
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double weight_decay = 1e-4;
  double key_momentum = 0.99;
  double queue_warmup_fraction = 0.25;
  std::size_t calibration_clips = 64;  // 0 keeps the plain seeded initialisation
  std::vector<std::size_t> speeds{1, 2, 4};
  std::size_t snapshot_interval = 50;
  std::filesystem::path resume_from;
  Precision checkpoint_precision = Precision::f64;

  double learning_rate(std::size_t epoch) const;
};

enum class ProbeMode { linear, finetune };

struct EvalConfig {
  std::filesystem::path checkpoint;
  ProbeMode mode = ProbeMode::linear;
  std::size_t eval_speed = 2;
  std::size_t clips_per_video = 3;
  std::size_t probe_iterations = 500;
  double probe_lr = 0.5;
  double probe_l2 = 1e-4;
  std::size_t finetune_epochs = 3;
  double finetune_lr = 0.005;
  std::size_t cam_clips = 8;
  double overlay_alpha = 0.5;
};

struct Config {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  DataConfig data;
  AugmentConfig augment;
  ModelConfig model;
  TeacherSpec teacher;
  LossConfig loss;
  TrainConfig trainer;
  EvalConfig eval;
  std::vector<std::uint64_t> ablation_seeds{0};

  // Fully resolved document (defaults filled in); the source of truth for
  // snapshots and hashing.
  nlohmann::json resolved;

  SamplingConfig sampling() const;
};

const nlohmann::json& config_schema();
const nlohmann::json& report_schema();
nlohmann::json default_config_json();

// "a.b.c=value"; value is parsed as JSON when possible, otherwise taken as a
// string. Keys not present in the schema are rejected.
void apply_override(nlohmann::json& document, const std::string& assignment);

// defaults <- user document <- env seed <- overrides, then schema and cross-field checks.
Config resolve_config(const nlohmann::json& user, const std::vector<std::string>& overrides = {},
                      const std::optional<std::string>& env_seed = std::nullopt);
Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                   const std::optional<std::string>& env_seed);
// Typed view of an already-resolved document (e.g. from a checkpoint).
Config config_from_json(const nlohmann::json& resolved);

// FNV-1a 64 over the canonical (sorted-key) dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& resolved);

// Writes resolved_config.json and seed.txt into dir.
void write_run_snapshot(const Config& config, const std::filesystem::path& dir);

}  // namespace mtvssl
