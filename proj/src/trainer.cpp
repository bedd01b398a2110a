#include "mtvssl/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "mtvssl/rng.hpp"

namespace mtvssl {

using nlohmann::json;

namespace {

constexpr std::uint64_t kModelStream = 0x6d6f64656cULL;
constexpr std::uint64_t kShuffleStream = 0x73687566ULL;
constexpr std::uint64_t kSampleStream = 0x73616d70ULL;
constexpr std::uint64_t kCalibrationStream = 0x63616c6962ULL;

bool finite(double x) { return std::isfinite(x); }

std::string step_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06zu.mtvc", step);
  return buf;
}

}  // namespace

json StepMetrics::to_json() const {
  return {{"step", step}, {"l_kd", l_kd}, {"l_m", l_m},         {"l_a", l_a},
          {"total", total}, {"lr", lr},   {"wall_time_s", wall_time_s}};
}

StepMetrics StepMetrics::from_json(const json& j) {
  StepMetrics m;
  m.step = j.at("step");
  m.l_kd = j.at("l_kd");
  m.l_m = j.at("l_m");
  m.l_a = j.at("l_a");
  m.total = j.at("total");
  m.lr = j.at("lr");
  m.wall_time_s = j.at("wall_time_s");
  return m;
}

std::vector<PreparedSample> prepare_batch(const std::vector<SourceVideo>& videos,
                                          const std::vector<std::size_t>& indices,
                                          const SamplingConfig& sampling, const Teacher* teacher,
                                          std::uint64_t seed, std::size_t step) {
  std::vector<PreparedSample> out(indices.size());
  std::vector<std::string> failures(indices.size());
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const SourceVideo& video = videos.at(indices[b]);
    try {
      PreparedSample& p = out[b];
      p.video_id = video.video_id;
      p.sample = make_training_sample(video, sampling,
                                      derive_seed(derive_seed(seed, kSampleStream), step, b));
      p.sample.video_index = indices[b];
      if (teacher) p.target = teacher->parse(p.sample.teacher_frame, TeacherContext{&video});
    } catch (const std::exception& e) {
      failures[b] = video.video_id + ": " + e.what();
    }
  }
  std::string msg;
  for (const auto& f : failures) {
    if (!f.empty()) msg += (msg.empty() ? "" : "; ") + f;
  }
  if (!msg.empty()) throw std::runtime_error("batch preparation failed: " + msg);
  return out;
}

TrainState::TrainState(const Config& cfg, std::uint64_t model_seed)
    : config(cfg),
      model(cfg.model, cfg.trainer.variant, model_seed),
      key_encoder(model),
      queue(cfg.loss.queue_capacity, cfg.model.projection_dim) {
  for (const auto& p : model.parameters()) {
    velocity[p.name] = Tensor(p.param->value.shape());
    second_moment[p.name] = Tensor(p.param->value.shape());
  }
}

TrainState::TrainState(const Config& cfg, Model initial)
    : config(cfg),
      model(std::move(initial)),
      key_encoder(model),
      queue(cfg.loss.queue_capacity, cfg.model.projection_dim) {
  for (const auto& p : model.parameters()) {
    velocity[p.name] = Tensor(p.param->value.shape());
    second_moment[p.name] = Tensor(p.param->value.shape());
  }
}

SampleLosses accumulate_sample_gradients(Model& model, const MomentumEncoder& key_encoder,
                                         const std::vector<std::vector<double>>& negatives,
                                         const PreparedSample& prepared, const LossConfig& loss,
                                         bool appearance_active, double scale) {
  const TrainingSample& s = prepared.sample;
  const bool use_kd = model.has_decoder() && loss.lambda_kd > 0.0;
  if (use_kd && !prepared.target) {
    throw std::invalid_argument("sample " + prepared.video_id + " has no teacher target");
  }
  SampleLosses out;

  const auto anchor = model.forward(s.anchor, {use_kd, true, appearance_active});
  const auto positive = model.forward(s.speed_positive, {false, true, false});
  const auto negative = model.forward(s.speed_negative, {false, true, false});

  // A diverged network yields a NaN parsing map; report it as a non-finite
  // loss rather than as a malformed input to the KD term.
  if (model.has_decoder() && anchor.parsing.probs().size() > 0 &&
      !finite(anchor.parsing.max_normalization_error())) {
    out.l_kd = std::numeric_limits<double>::quiet_NaN();
    return out;
  }

  Model::OutputGrads anchor_grads;
  if (use_kd) {
    auto kd = kd_loss_with_grad(*prepared.target, anchor.parsing);
    out.l_kd = kd.loss;
    for (auto& g : kd.d_student.values()) g *= scale * loss.lambda_kd;
    anchor_grads.parsing = std::move(kd.d_student);
  } else if (model.has_decoder() && prepared.target) {
    // Reported for monitoring even when its weight is zero.
    const auto parsing = model.decode_parsing(anchor.z_h);
    out.l_kd = finite(parsing.max_normalization_error()) ? kd_loss(*prepared.target, parsing)
                                                        : std::numeric_limits<double>::quiet_NaN();
  }

  const auto m = motion_loss(anchor.motion.span(), positive.motion.span(), negative.motion.span(),
                             loss.margin);
  out.l_m = m.loss;
  auto scaled = [&](const std::vector<double>& g, double w) {
    Tensor t({g.size()}, g);
    for (auto& v : t.values()) v *= scale * w;
    return t;
  };
  anchor_grads.motion = scaled(m.d_anchor, loss.lambda_motion);

  if (appearance_active) {
    const Tensor key = key_encoder.key(s.appearance_positive);
    const auto a = appearance_loss(anchor.appearance.span(), key.span(), negatives, loss.temperature);
    out.l_a = a.loss;
    anchor_grads.appearance = scaled(a.d_anchor, loss.lambda_appearance);
  }

  if (!finite(out.l_kd) || !finite(out.l_m) || !finite(out.l_a)) return out;

  model.backward(anchor, anchor_grads);
  Model::OutputGrads pos_grads, neg_grads;
  pos_grads.motion = scaled(m.d_pos, loss.lambda_motion);
  neg_grads.motion = scaled(m.d_neg, loss.lambda_motion);
  model.backward(positive, pos_grads);
  model.backward(negative, neg_grads);
  return out;
}

void apply_update(TrainState& state, double lr) {
  const TrainConfig& tc = state.config.trainer;
  const double mu = tc.momentum;
  const double wd = tc.weight_decay;
  const double t = double(state.step + 1);
  const double c1 = 1.0 - std::pow(mu, t);
  const double c2 = 1.0 - std::pow(tc.adam_beta2, t);
  for (auto& p : state.model.parameters()) {
    auto value = p.param->value.span();
    auto grad = p.param->grad.span();
    auto m = state.velocity.at(p.name).span();
    if (tc.optimizer == Optimizer::sgd) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        m[i] = mu * m[i] + grad[i] + wd * value[i];
        value[i] -= lr * m[i];
      }
      continue;
    }
    auto v = state.second_moment.at(p.name).span();
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = mu * m[i] + (1.0 - mu) * grad[i];
      v[i] = tc.adam_beta2 * v[i] + (1.0 - tc.adam_beta2) * grad[i] * grad[i];
      const double step = (m[i] / c1) / (std::sqrt(v[i] / c2) + tc.adam_epsilon);
      value[i] -= lr * (step + wd * value[i]);
    }
  }
}

StepMetrics pretrain_step(TrainState& state, const std::vector<PreparedSample>& batch, double lr) {
  const auto& cfg = state.config;
  if (batch.size() < 2) throw std::invalid_argument("pretrain_step: batch size must be >= 2");

  // Keys of this batch come from the encoder state before the update.
  std::vector<std::vector<double>> keys(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    keys[b] = state.key_encoder.key(batch[b].sample.appearance_positive).values();
  }
  const auto queued = state.queue.snapshot();
  const double warmup = cfg.trainer.queue_warmup_fraction * double(cfg.loss.queue_capacity);
  const bool appearance_active =
      cfg.loss.lambda_appearance > 0.0 && double(state.queue.size()) >= warmup;

  state.model.zero_grad();
  StepMetrics metrics;
  const double scale = 1.0 / double(batch.size());
  std::vector<std::vector<double>> negatives;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    // Queue plus the other in-flight keys of this batch.
    negatives = queued;
    for (std::size_t o = 0; o < batch.size(); ++o) {
      if (o != b) negatives.push_back(keys[o]);
    }
    const auto l = accumulate_sample_gradients(state.model, state.key_encoder, negatives, batch[b],
                                               cfg.loss, appearance_active, scale);
    if (!finite(l.l_kd) || !finite(l.l_m) || !finite(l.l_a)) {
      std::vector<std::string> ids;
      for (const auto& p : batch) ids.push_back(p.video_id);
      throw NonFiniteLossError("non-finite loss at step " + std::to_string(state.step + 1) +
                                   " (l_kd=" + std::to_string(l.l_kd) +
                                   ", l_m=" + std::to_string(l.l_m) +
                                   ", l_a=" + std::to_string(l.l_a) + ") on video " +
                                   batch[b].video_id,
                               ids);
    }
    metrics.l_kd += l.l_kd * scale;
    metrics.l_m += l.l_m * scale;
    metrics.l_a += l.l_a * scale;
  }
  const double w_a = appearance_active ? cfg.loss.lambda_appearance : 0.0;
  const double w_kd = state.model.has_decoder() ? cfg.loss.lambda_kd : 0.0;
  metrics.total = w_kd * metrics.l_kd + cfg.loss.lambda_motion * metrics.l_m + w_a * metrics.l_a;
  metrics.lr = lr;

  apply_update(state, lr);
  state.key_encoder.update(state.model, cfg.trainer.key_momentum);
  for (const auto& k : keys) state.queue.push(k);
  ++state.step;
  metrics.step = state.step;
  return metrics;
}

std::size_t steps_per_epoch(std::size_t videos, std::size_t batch_size) {
  if (batch_size == 0 || videos < batch_size) {
    throw std::invalid_argument("dataset of " + std::to_string(videos) +
                                " videos is smaller than the batch size " +
                                std::to_string(batch_size));
  }
  return videos / batch_size;
}

double learning_rate_at(const TrainConfig& trainer, std::size_t step, std::size_t per_epoch) {
  return trainer.learning_rate(step / per_epoch);
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t videos,
                                       std::size_t batch_size, std::size_t step) {
  const std::size_t per_epoch = steps_per_epoch(videos, batch_size);
  const std::size_t epoch = step / per_epoch;
  const std::size_t pos = step % per_epoch;
  std::vector<std::size_t> perm(videos);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(derive_seed(seed, kShuffleStream), epoch));
  for (std::size_t i = videos; i > 1; --i) {
    std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.uniform_int(0, std::int64_t(i) - 1))]);
  }
  return {perm.begin() + std::ptrdiff_t(pos * batch_size),
          perm.begin() + std::ptrdiff_t((pos + 1) * batch_size)};
}

std::uint64_t model_seed_for(std::uint64_t run_seed) { return derive_seed(run_seed, kModelStream); }

Model initial_model(const Config& config, const std::vector<SourceVideo>& videos) {
  Model model(config.model, config.trainer.variant, model_seed_for(config.seed));
  const std::size_t n = std::min(config.trainer.calibration_clips, videos.size());
  if (n < 2) return model;
  const std::uint64_t seed = derive_seed(config.seed, kCalibrationStream);
  const std::vector<std::size_t> order = batch_indices(seed, videos.size(), n, 0);
  std::vector<Tensor> clips(n);
  const SamplingConfig sampling = config.sampling();
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(n); ++i) {
    const std::size_t k = std::size_t(i);
    clips[k] = make_training_sample(videos[order[k]], sampling, derive_seed(seed, k)).anchor.frames;
  }
  model.calibrate(clips);
  return model;
}

Checkpoint make_checkpoint(const TrainState& state) {
  const auto& cfg = state.config;
  const Precision prec = cfg.trainer.checkpoint_precision;
  Checkpoint ck;
  ck.metadata = {{"format_version", kCheckpointVersion},
                 {"variant", to_string(cfg.trainer.variant)},
                 {"step", state.step},
                 {"seed", cfg.seed},
                 {"config_hash", config_hash(cfg.resolved)},
                 {"config", cfg.resolved},
                 {"precision", to_string(prec)},
                 {"representation_dim", state.model.representation_dim()},
                 {"parameter_count", state.model.parameter_count()},
                 {"queue_size", state.queue.size()}};
  ck.add_parameters("model/", state.model.parameters(), prec);
  ck.add_parameters("key/", state.key_encoder.parameters(), prec);
  for (const auto& [name, v] : state.velocity) ck.add("velocity/" + name, v, prec);
  for (const auto& [name, v] : state.second_moment) ck.add("second_moment/" + name, v, prec);
  if (!state.queue.empty()) {
    std::vector<double> flat;
    for (const auto& e : state.queue.snapshot()) flat.insert(flat.end(), e.begin(), e.end());
    ck.add("queue", Tensor({state.queue.size(), state.queue.dim()}, std::move(flat)), prec);
  }
  return ck;
}

void save_state(const TrainState& state, const std::filesystem::path& path) {
  write_checkpoint(path, make_checkpoint(state));
}

TrainState state_from_checkpoint(const Checkpoint& ck) {
  const Config cfg = config_from_json(ck.metadata.at("config"));
  TrainState state(cfg, 0);
  load_parameters(ck, "model/", state.model.parameters());
  load_parameters(ck, "key/", state.key_encoder.parameters());
  for (auto* moments : {&state.velocity, &state.second_moment}) {
    std::vector<NamedParam> named;
    std::vector<Param> holders(moments->size());
    std::size_t i = 0;
    for (auto& [name, v] : *moments) {
      holders[i].value = v;
      named.push_back({name, &holders[i]});
      ++i;
    }
    load_parameters(ck, moments == &state.velocity ? "velocity/" : "second_moment/", named);
    i = 0;
    for (auto& [name, v] : *moments) v = holders[i++].value;
  }
  if (const auto* q = ck.find("queue")) {
    if (q->value.rank() != 2 || q->value.dim(1) != state.queue.dim()) {
      throw std::invalid_argument("checkpoint queue has shape " + shape_to_string(q->value.shape()));
    }
    std::vector<std::vector<double>> entries;
    for (std::size_t r = 0; r < q->value.dim(0); ++r) {
      const double* row = q->value.data() + r * q->value.dim(1);
      entries.emplace_back(row, row + q->value.dim(1));
    }
    state.queue.restore(entries);
  }
  state.step = ck.metadata.at("step");
  return state;
}

TrainState load_state(const std::filesystem::path& path) {
  return state_from_checkpoint(read_checkpoint(path));
}

Model model_from_checkpoint(const Checkpoint& ck) {
  if (!ck.metadata.contains("config") || !ck.metadata.contains("variant")) {
    throw std::invalid_argument("checkpoint metadata lacks config or variant");
  }
  const Config cfg = config_from_json(ck.metadata["config"]);
  const Variant v = variant_from_string(ck.metadata["variant"]);
  if (v != cfg.trainer.variant) {
    throw std::invalid_argument("checkpoint variant does not match its embedded config");
  }
  Model model(cfg.model, v, 0);
  load_parameters(ck, "model/", model.parameters());
  if (ck.metadata.contains("representation_dim") &&
      ck.metadata["representation_dim"].get<std::size_t>() != model.representation_dim()) {
    throw std::invalid_argument("checkpoint declares representation_dim " +
                                ck.metadata["representation_dim"].dump() + " but the " +
                                to_string(v) + " model produces " +
                                std::to_string(model.representation_dim()));
  }
  return model;
}

std::vector<StepMetrics> read_metrics_log(const std::filesystem::path& path) {
  std::vector<StepMetrics> out;
  std::ifstream is(path);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) out.push_back(StepMetrics::from_json(json::parse(line)));
  }
  return out;
}

PretrainResult pretrain(const Config& config, const std::vector<SourceVideo>& videos,
                        const Teacher* teacher, const std::filesystem::path& out_dir,
                        std::optional<std::size_t> interrupt_after) {
  const auto& tc = config.trainer;
  if (tc.variant != Variant::no_kd && config.loss.lambda_kd > 0.0 && !teacher) {
    throw std::invalid_argument("a teacher is required for the " + to_string(tc.variant) +
                                " variant");
  }
  std::filesystem::create_directories(out_dir);
  PretrainResult result;
  result.metrics_log = out_dir / "metrics.jsonl";

  std::optional<TrainState> state;
  std::vector<StepMetrics> history;
  if (!tc.resume_from.empty()) {
    state.emplace(load_state(tc.resume_from));
    if (state->config.trainer.variant != tc.variant) {
      throw std::invalid_argument("resume checkpoint is a " +
                                  to_string(state->config.trainer.variant) + " run");
    }
    // Keep the original run's settings but accept a new schedule length.
    state->config.trainer.epochs = tc.epochs;
    state->config.trainer.max_steps = tc.max_steps;
    for (const auto& m : read_metrics_log(result.metrics_log)) {
      if (m.step <= state->step) history.push_back(m);
    }
    if (history.size() != state->step) {
      throw std::runtime_error("metrics log " + result.metrics_log.string() + " has " +
                               std::to_string(history.size()) + " entries up to step " +
                               std::to_string(state->step) + "; cannot resume without gaps");
    }
  } else {
    state.emplace(config, initial_model(config, videos));
  }

  const Config& run = state->config;
  const SamplingConfig sampling = run.sampling();
  const std::size_t per_epoch = steps_per_epoch(videos.size(), run.trainer.batch_size);
  std::size_t total_steps = per_epoch * run.trainer.epochs;
  if (run.trainer.max_steps > 0) total_steps = std::min(total_steps, run.trainer.max_steps);

  {
    std::ofstream log(result.metrics_log, std::ios::trunc);
    for (const auto& m : history) log << m.to_json().dump() << "\n";
    if (!log) throw std::runtime_error("cannot write " + result.metrics_log.string());
  }
  std::ofstream log(result.metrics_log, std::ios::app);

  const auto t0 = std::chrono::steady_clock::now();
  const Teacher* active_teacher = run.trainer.variant == Variant::no_kd ? nullptr : teacher;
  std::size_t ran = 0;
  while (state->step < total_steps) {
    if (interrupt_after && ran >= *interrupt_after) break;
    const std::size_t step = state->step;
    const auto indices = batch_indices(run.seed, videos.size(), run.trainer.batch_size, step);
    const auto batch = prepare_batch(videos, indices, sampling, active_teacher, run.seed, step);
    StepMetrics m;
    try {
      m = pretrain_step(*state, batch, learning_rate_at(run.trainer, step, per_epoch));
    } catch (const NonFiniteLossError& e) {
      std::ofstream dump(out_dir / "nonfinite_batch.json");
      dump << json{{"step", step + 1}, {"error", e.what()}, {"video_ids", e.video_ids()}}.dump(2)
           << "\n";
      throw;
    }
    m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log << m.to_json().dump() << "\n";
    log.flush();
    if (!log) throw std::runtime_error("failed writing metrics log (disk full?)");
    result.metrics.push_back(m);
    ++ran;
    if (run.trainer.snapshot_interval > 0 && state->step % run.trainer.snapshot_interval == 0) {
      const auto path = out_dir / "checkpoints" / step_name(state->step);
      save_state(*state, path);
      result.checkpoints.push_back(path);
    }
  }
  if (state->step >= total_steps) {
    result.final_checkpoint = out_dir / "model.mtvc";
  } else {
    result.final_checkpoint = out_dir / "checkpoints" / step_name(state->step);
    result.checkpoints.push_back(result.final_checkpoint);
  }
  save_state(*state, result.final_checkpoint);
  return result;
}

}  // namespace mtvssl
