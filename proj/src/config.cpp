#include "mtvssl/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>

#include "mtvssl/json_schema.hpp"
#include "mtvssl/schemas.hpp"

namespace mtvssl {

using nlohmann::json;

namespace {

void merge_into(json& base, const json& patch) {
  for (const auto& [key, value] : patch.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object()) {
      merge_into(base[key], value);
    } else {
      base[key] = value;
    }
  }
}

void require_valid(const json& document, const std::string& what) {
  const auto errors = validate_json(document, config_schema());
  if (errors.empty()) return;
  std::string msg = what + " is invalid:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw ConfigError(msg);
}

std::vector<std::size_t> size_list(const json& j) {
  std::vector<std::size_t> out;
  for (const auto& v : j) out.push_back(v.get<std::size_t>());
  return out;
}

}  // namespace

double TrainConfig::learning_rate(std::size_t epoch) const {
  double lr = base_lr;
  for (std::size_t m : lr_milestones) {
    if (epoch >= m) lr *= lr_decay;
  }
  return lr;
}

SamplingConfig Config::sampling() const {
  SamplingConfig s;
  s.speeds = trainer.speeds;
  s.clip_length = model.clip_length;
  s.augment = augment;
  return s;
}

const json& config_schema() {
  static const json schema = json::parse(schemas::kConfigSchema);
  return schema;
}

const json& report_schema() {
  static const json schema = json::parse(schemas::kReportSchema);
  return schema;
}

json default_config_json() { return schema_defaults(config_schema()); }

void apply_override(json& document, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must have the form key.path=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    parts.push_back(key.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }

  const json* schema = &config_schema();
  json* node = &document;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& part = parts[i];
    if (part.empty() || !schema->contains("properties") || !(*schema)["properties"].contains(part)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    schema = &(*schema)["properties"][part];
    if (i + 1 < parts.size()) {
      if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
      node = &(*node)[part];
    }
  }

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  // A value such as "1234" for a string-typed key stays a string.
  if (schema->value("type", json()) == "string" && !value.is_string()) value = raw;
  (*node)[parts.back()] = value;
}

Config resolve_config(const json& user, const std::vector<std::string>& overrides,
                      const std::optional<std::string>& env_seed) {
  if (!user.is_object()) throw ConfigError("config document must be a JSON object");
  require_valid(user, "config file");
  json doc = default_config_json();
  merge_into(doc, user);
  if (env_seed && !env_seed->empty()) {
    std::uint64_t seed = 0;
    const char* first = env_seed->data();
    const char* last = first + env_seed->size();
    const auto [ptr, ec] = std::from_chars(first, last, seed);
    if (ec != std::errc() || ptr != last) {
      throw ConfigError("MTVSSL_SEED must be a non-negative integer, got '" + *env_seed + "'");
    }
    doc["seed"] = seed;
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return config_from_json(doc);
}

Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                   const std::optional<std::string>& env_seed) {
  json user = json::object();
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file " + path.string());
    try {
      user = json::parse(is);
    } catch (const json::parse_error& e) {
      throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
  }
  return resolve_config(user, overrides, env_seed);
}

Config config_from_json(const json& resolved) {
  json doc = default_config_json();
  merge_into(doc, resolved);
  require_valid(doc, "resolved config");

  Config c;
  c.resolved = doc;
  c.seed = doc["seed"].get<std::uint64_t>();
  c.output_dir = doc["output_dir"].get<std::string>();

  const auto& d = doc["data"];
  c.data.source = d["source"];
  c.data.root = d["root"].get<std::string>();
  c.data.manifest = d["manifest"].get<std::string>();
  c.data.test_manifest = d["test_manifest"].get<std::string>();
  c.data.scene.num_actions = d["num_actions"];
  c.data.scene.num_part_classes = d["num_part_classes"];
  c.data.scene.frame_count = d["frame_count"];
  c.data.scene.height = d["height"];
  c.data.scene.width = d["width"];
  c.data.train_videos_per_action = d["train_videos_per_action"];
  c.data.test_videos_per_action = d["test_videos_per_action"];

  const auto& a = doc["augment"];
  c.augment.crop_height = a["crop_height"];
  c.augment.crop_width = a["crop_width"];
  c.augment.scale_min = a["scale_min"];
  c.augment.scale_max = a["scale_max"];
  c.augment.ratio_min = a["ratio_min"];
  c.augment.ratio_max = a["ratio_max"];
  c.augment.flip_prob = a["flip_prob"];
  c.augment.brightness = a["brightness"];
  c.augment.contrast = a["contrast"];
  c.augment.saturation = a["saturation"];

  const auto& m = doc["model"];
  c.model.clip_length = m["clip_length"];
  c.model.input_height = c.augment.crop_height;
  c.model.input_width = c.augment.crop_width;
  c.model.conv_channels = size_list(m["conv_channels"]);
  c.model.split_depth = m["split_depth"];
  c.model.hidden_dim = m["hidden_dim"];
  c.model.embedding_dim = m["embedding_dim"];
  c.model.projection_dim = m["projection_dim"];
  c.model.decoder_channels = m["decoder_channels"];
  c.model.decoder_grid = m["decoder_grid"];

  const auto& t = doc["teacher"];
  c.teacher.kind = teacher_kind_from_string(t["kind"]);
  c.teacher.classes = t["classes"];
  c.teacher.manifest = t["manifest"].get<std::string>();
  c.teacher.oracle_delta = t["oracle_delta"];
  c.teacher.stub_seed = t["stub_seed"];
  c.teacher.out_height = c.model.parsing_height();
  c.teacher.out_width = c.model.parsing_width();
  c.model.parsing_classes = c.teacher.classes;

  const auto& l = doc["loss"];
  c.loss.margin = l["margin"];
  c.loss.temperature = l["temperature"];
  c.loss.lambda_kd = l["lambda_kd"];
  c.loss.lambda_motion = l["lambda_motion"];
  c.loss.lambda_appearance = l["lambda_appearance"];
  c.loss.queue_capacity = l["queue_capacity"];

  const auto& tr = doc["trainer"];
  c.trainer.variant = variant_from_string(tr["variant"]);
  c.trainer.epochs = tr["epochs"];
  c.trainer.max_steps = tr["max_steps"];
  c.trainer.batch_size = tr["batch_size"];
  c.trainer.base_lr = tr["base_lr"];
  c.trainer.lr_milestones = size_list(tr["lr_milestones"]);
  c.trainer.lr_decay = tr["lr_decay"];
  c.trainer.optimizer = tr["optimizer"] == "sgd" ? Optimizer::sgd : Optimizer::adam;
  c.trainer.momentum = tr["momentum"];
  c.trainer.adam_beta2 = tr["adam_beta2"];
  c.trainer.adam_epsilon = tr["adam_epsilon"];
  c.trainer.weight_decay = tr["weight_decay"];
  c.trainer.key_momentum = tr["key_momentum"];
  c.trainer.queue_warmup_fraction = tr["queue_warmup_fraction"];
  c.trainer.calibration_clips = tr["calibration_clips"];
  c.trainer.speeds = size_list(tr["speeds"]);
  c.trainer.snapshot_interval = tr["snapshot_interval"];
  c.trainer.resume_from = tr["resume_from"].get<std::string>();
  c.trainer.checkpoint_precision = precision_from_string(tr["checkpoint_precision"]);

  const auto& e = doc["eval"];
  c.eval.checkpoint = e["checkpoint"].get<std::string>();
  c.eval.mode = e["mode"] == "linear" ? ProbeMode::linear : ProbeMode::finetune;
  c.eval.eval_speed = e["eval_speed"];
  c.eval.clips_per_video = e["clips_per_video"];
  c.eval.probe_iterations = e["probe_iterations"];
  c.eval.probe_lr = e["probe_lr"];
  c.eval.probe_l2 = e["probe_l2"];
  c.eval.finetune_epochs = e["finetune_epochs"];
  c.eval.finetune_lr = e["finetune_lr"];
  c.eval.cam_clips = e["cam_clips"];
  c.eval.overlay_alpha = e["overlay_alpha"];

  c.ablation_seeds.clear();
  for (const auto& s : doc["ablation"]["seeds"]) c.ablation_seeds.push_back(s.get<std::uint64_t>());

  try {
    c.augment.validate();
    c.model.validate();
    c.teacher.validate();
    c.loss.validate();
    if (c.data.source == "synthetic") c.data.scene.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }

  std::vector<std::size_t> speeds = c.trainer.speeds;
  std::sort(speeds.begin(), speeds.end());
  if (std::adjacent_find(speeds.begin(), speeds.end()) != speeds.end()) {
    throw ConfigError("trainer.speeds must be distinct");
  }
  if (c.data.source == "synthetic") {
    const std::size_t needed = (c.model.clip_length - 1) * speeds.back() + 1;
    if (needed > c.data.scene.frame_count) {
      throw ConfigError("data.frame_count " + std::to_string(c.data.scene.frame_count) +
                        " is too short for clip_length " + std::to_string(c.model.clip_length) +
                        " at speed " + std::to_string(speeds.back()) + " (needs " +
                        std::to_string(needed) + ")");
    }
    if (c.teacher.kind == TeacherKind::oracle && c.teacher.classes != c.data.scene.num_part_classes) {
      throw ConfigError("teacher.classes must equal data.num_part_classes for the oracle teacher");
    }
  } else if (c.data.manifest.empty()) {
    throw ConfigError("data.manifest is required when data.source is \"directory\"");
  }
  if (c.teacher.kind == TeacherKind::file && c.teacher.manifest.empty()) {
    throw ConfigError("teacher.manifest is required when teacher.kind is \"file\"");
  }
  for (std::size_t i = 1; i < c.trainer.lr_milestones.size(); ++i) {
    if (c.trainer.lr_milestones[i] <= c.trainer.lr_milestones[i - 1]) {
      throw ConfigError("trainer.lr_milestones must be strictly increasing");
    }
  }
  return c;
}

std::string config_hash(const json& resolved) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : resolved.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_run_snapshot(const Config& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream cfg(dir / "resolved_config.json");
  cfg << config.resolved.dump(2) << "\n";
  std::ofstream seed(dir / "seed.txt");
  seed << config.seed << "\n";
  if (!cfg || !seed) throw std::runtime_error("cannot write run snapshot into " + dir.string());
}

}  // namespace mtvssl
