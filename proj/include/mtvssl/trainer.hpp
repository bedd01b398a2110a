#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtvssl/checkpoint.hpp"
#include "mtvssl/config.hpp"
#include "mtvssl/losses.hpp"
#include "mtvssl/model.hpp"
#include "mtvssl/teacher.hpp"
#include "mtvssl/video.hpp"

namespace mtvssl {

struct StepMetrics {
  std::size_t step = 0;
  double l_kd = 0.0;
  double l_m = 0.0;
  double l_a = 0.0;
  double total = 0.0;
  double lr = 0.0;
  double wall_time_s = 0.0;

  nlohmann::json to_json() const;
  static StepMetrics from_json(const nlohmann::json& j);
};

// Raised when any loss term is NaN or infinite.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& what, std::vector<std::string> video_ids)
      : std::runtime_error(what), video_ids_(std::move(video_ids)) {}
  const std::vector<std::string>& video_ids() const { return video_ids_; }

 private:
  std::vector<std::string> video_ids_;
};

// A training sample with its teacher target already computed (absent for no_kd).
struct PreparedSample {
  TrainingSample sample;
  std::optional<SegmentationProbMap> target;
  std::string video_id;
};

// Samples and teacher targets for the given video indices. Sample b is seeded
// from (seed, step, b), so the batch does not depend on worker scheduling.
std::vector<PreparedSample> prepare_batch(const std::vector<SourceVideo>& videos,
                                          const std::vector<std::size_t>& indices,
                                          const SamplingConfig& sampling, const Teacher* teacher,
                                          std::uint64_t seed, std::size_t step);

// Everything needed to continue training bit-identically.
struct TrainState {
  TrainState(const Config& config, std::uint64_t model_seed);
  TrainState(const Config& config, Model initial);

  Config config;
  std::size_t step = 0;  // completed optimizer steps
  Model model;
  MomentumEncoder key_encoder;
  NegativeQueue queue;
  // Optimizer moments by parameter name: SGD velocity or Adam first moment,
  // and the Adam second moment (kept at zero for SGD).
  std::map<std::string, Tensor> velocity;
  std::map<std::string, Tensor> second_moment;
};

// Loss terms of one sample. Gradients, scaled by `scale`, are accumulated into
// the model; the momentum encoder and the negatives are never modified.
struct SampleLosses {
  double l_kd = 0.0;
  double l_m = 0.0;
  double l_a = 0.0;
};
SampleLosses accumulate_sample_gradients(Model& model, const MomentumEncoder& key_encoder,
                                         const std::vector<std::vector<double>>& negatives,
                                         const PreparedSample& sample, const LossConfig& loss,
                                         bool appearance_active, double scale);

// One optimisation step over a prepared batch: forward, losses, backward, SGD
// with momentum and weight decay, key-encoder momentum update, queue push.
// One optimizer step from the gradients accumulated in state.model.
void apply_update(TrainState& state, double lr);

StepMetrics pretrain_step(TrainState& state, const std::vector<PreparedSample>& batch, double lr);

// Learning rate for the step about to run.
double learning_rate_at(const TrainConfig& trainer, std::size_t step, std::size_t steps_per_epoch);
std::size_t steps_per_epoch(std::size_t videos, std::size_t batch_size);
// Video indices used by step `step` (0-based): a per-epoch seeded permutation.
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t videos,
                                       std::size_t batch_size, std::size_t step);

// Model initialisation seed for a run seed; shared by every variant so they
// start from the same f_l.
std::uint64_t model_seed_for(std::uint64_t run_seed);
// Seeded weights, then calibrated on training anchors when
// trainer.calibration_clips > 0. Pretraining starts from this model; it is
// also the random-initialisation baseline.
Model initial_model(const Config& config, const std::vector<SourceVideo>& videos);

Checkpoint make_checkpoint(const TrainState& state);
void save_state(const TrainState& state, const std::filesystem::path& path);
TrainState load_state(const std::filesystem::path& path);
TrainState state_from_checkpoint(const Checkpoint& checkpoint);
// Student model only; rejects checkpoints whose declared representation size disagrees.
Model model_from_checkpoint(const Checkpoint& checkpoint);

struct PretrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics_log;
  std::vector<std::filesystem::path> checkpoints;
  std::vector<StepMetrics> metrics;  // steps run in this invocation
};

// Runs (or resumes, when trainer.resume_from is set) pre-training. Writes
// <out>/metrics.jsonl, periodic <out>/checkpoints/step_NNNNNN.mtvc and
// <out>/model.mtvc. `interrupt_after` stops early after that many steps in
// this invocation (used to exercise resumption).
PretrainResult pretrain(const Config& config, const std::vector<SourceVideo>& videos,
                        const Teacher* teacher, const std::filesystem::path& out_dir,
                        std::optional<std::size_t> interrupt_after = std::nullopt);

std::vector<StepMetrics> read_metrics_log(const std::filesystem::path& path);

}  // namespace mtvssl
