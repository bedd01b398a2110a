#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtvssl/layers.hpp"
#include "mtvssl/prob_map.hpp"
#include "mtvssl/video.hpp"

namespace mtvssl {

enum class Variant { full, no_kd, task_independent };

Variant variant_from_string(const std::string& name);
std::string to_string(Variant v);

struct ModelConfig {
  std::size_t clip_length = 8;
  std::size_t input_height = 32;
  std::size_t input_width = 32;
  // Output channels of each 3x3x3 conv. The first halves H and W; later ones
  // also halve T.
  std::vector<std::size_t> conv_channels{8, 16};
  // Number of conv layers in the shared low-level encoder; the rest are
  // replicated inside each high-level encoder.
  std::size_t split_depth = 2;
  std::size_t hidden_dim = 64;
  std::size_t embedding_dim = 32;
  std::size_t projection_dim = 16;
  std::size_t decoder_channels = 8;
  std::size_t decoder_grid = 4;  // parsing output is 2*grid square
  std::size_t parsing_classes = 4;

  std::size_t parsing_height() const { return 2 * decoder_grid; }
  std::size_t parsing_width() const { return 2 * decoder_grid; }
  void validate() const;
};

// f_l: the convolution stack shared by every branch.
class LowLevelEncoder {
 public:
  LowLevelEncoder() = default;
  explicit LowLevelEncoder(const ModelConfig& config);

  struct Trace {
    std::vector<Conv3dRelu::Trace> layers;
  };
  // (3, T, H, W) -> (C_f, T', H', W')
  Tensor forward(const Tensor& input, Trace* trace) const;
  Tensor backward(const Trace& trace, const Tensor& grad);
  void init(std::uint64_t seed, const std::string& prefix);
  // Standardizes each layer in turn on `inputs`; returns the resulting features.
  std::vector<Tensor> calibrate(std::vector<Tensor> inputs);
  void collect(const std::string& prefix, std::vector<NamedParam>& out);

 private:
  std::vector<Conv3dRelu> layers_;
};

// h_h / h_c: remaining convs, global average pool, two-layer perceptron.
class HighLevelEncoder {
 public:
  HighLevelEncoder() = default;
  explicit HighLevelEncoder(const ModelConfig& config);

  struct Trace {
    std::vector<Conv3dRelu::Trace> convs;
    Shape pooled_from;
    Tensor pooled;
    Tensor hidden;  // post-ReLU
  };
  Tensor forward(const Tensor& features, Trace* trace) const;
  Tensor backward(const Trace& trace, const Tensor& grad_z);
  void init(std::uint64_t seed, const std::string& prefix);
  std::vector<Tensor> calibrate(std::vector<Tensor> features);
  void collect(const std::string& prefix, std::vector<NamedParam>& out);

 private:
  std::vector<Conv3dRelu> convs_;
  Linear fc1_, fc2_;
};

// g_h: perceptron onto a coarse grid, 2x transposed-conv upsampling, class softmax.
class ParsingDecoder {
 public:
  ParsingDecoder() = default;
  explicit ParsingDecoder(const ModelConfig& config);

  struct Trace {
    Tensor z;
    Tensor grid;  // post-ReLU, (Cd, g, g)
    Tensor probs;
  };
  SegmentationProbMap forward(const Tensor& z, Trace* trace) const;
  Tensor logits(const Tensor& z) const;
  // grad_probs is d loss / d probabilities.
  Tensor backward(const Trace& trace, const Tensor& grad_probs);
  void init(std::uint64_t seed, const std::string& prefix);
  void collect(const std::string& prefix, std::vector<NamedParam>& out);

 private:
  std::size_t channels_ = 0, grid_ = 0;
  Linear fc_;
  Upsample2x up_;
};

// g_m / g_a: two-layer perceptron with an L2-normalised output.
class ProjectionHead {
 public:
  ProjectionHead() = default;
  explicit ProjectionHead(const ModelConfig& config);

  struct Trace {
    Tensor z;
    Tensor hidden;
    Tensor raw;
  };
  Tensor forward(const Tensor& z, Trace* trace) const;
  Tensor backward(const Trace& trace, const Tensor& grad_out);
  void init(std::uint64_t seed, const std::string& prefix);
  void calibrate(const std::vector<Tensor>& z);
  void collect(const std::string& prefix, std::vector<NamedParam>& out);

 private:
  Linear fc1_, fc2_;
};

// Pixel values are shifted and scaled to roughly zero mean, unit spread.
inline constexpr double kInputMean = 0.5;
inline constexpr double kInputStd = 0.25;

// Converts a (T, H, W, 3) clip tensor to the normalised channel-first network input.
Tensor to_network_input(const Tensor& clip_frames);
Tensor from_network_input_grad(const Tensor& grad);

// Which heads a forward pass evaluates.
struct ForwardOutputs {
  bool parsing = true;
  bool motion = true;
  bool appearance = true;
};

// All trainable networks of one variant.
//   full:             f_l, h_h, h_c, g_h, g_m, g_a
//   no_kd:            f_l, h_c, g_m, g_a
//   task_independent: f_l, one shared h feeding g_h, g_m and g_a
class Model {
 public:
  Model(const ModelConfig& config, Variant variant, std::uint64_t seed);

  Variant variant() const { return variant_; }
  const ModelConfig& config() const { return config_; }
  bool has_decoder() const { return variant_ != Variant::no_kd; }
  // Dimension of the downstream representation.
  std::size_t representation_dim() const;

  struct Forward {
    Shape input_shape;
    LowLevelEncoder::Trace low;
    Tensor features;
    HighLevelEncoder::Trace prior_trace;
    Tensor z_h;  // empty for no_kd
    ParsingDecoder::Trace decoder_trace;
    SegmentationProbMap parsing;
    HighLevelEncoder::Trace contrastive_trace;
    Tensor z_c;
    ProjectionHead::Trace motion_trace, appearance_trace;
    Tensor motion;
    Tensor appearance;
  };

  Forward forward(const Tensor& clip_frames, ForwardOutputs wanted = {}) const;
  Forward forward(const VideoClip& clip, ForwardOutputs wanted = {}) const {
    return forward(clip.frames, wanted);
  }

  // Upstream gradients; empty tensors mean "no gradient from this output".
  struct OutputGrads {
    Tensor parsing;  // d loss / d probabilities
    Tensor motion;
    Tensor appearance;
    // Direct gradients on the embeddings (used when fine-tuning on the representation).
    Tensor z_h;
    Tensor z_c;
  };
  // Accumulates into parameter grads; returns d loss / d clip frames (T, H, W, 3).
  Tensor backward(const Forward& fwd, const OutputGrads& grads);

  Tensor shared_features(const Tensor& clip_frames) const;
  Tensor encode_prior(const VideoClip& clip) const;
  Tensor encode_contrastive(const VideoClip& clip) const;
  SegmentationProbMap decode_parsing(const Tensor& z_h) const;
  Tensor project_motion(const Tensor& z_c) const;
  Tensor project_appearance(const Tensor& z_c) const;
  // [z_h || z_c] for variants with a prior branch, z_c alone for no_kd.
  Tensor representation(const VideoClip& clip) const;

  std::vector<NamedParam> parameters();
  std::vector<ConstNamedParam> parameters() const;
  // Parameters whose name starts with `group` + ".".
  std::vector<NamedParam> parameters_in(const std::string& group);
  std::vector<std::string> groups() const;
  std::size_t parameter_count() const;
  void zero_grad();

  // Data-dependent initialisation: layer by layer, rescales every encoder and
  // projection unit to zero-mean, unit-variance pre-activations over the clips.
  // The parsing decoder is left untouched.
  void calibrate(const std::vector<Tensor>& clip_frames);

  // Name of the encoder feeding the contrastive heads ("contrastive_encoder",
  // or "shared_encoder" for task_independent).
  std::string contrastive_group() const;
  std::string prior_group() const;

 private:
  friend class MomentumEncoder;

  const HighLevelEncoder& contrastive_encoder() const;
  HighLevelEncoder& contrastive_encoder();

  ModelConfig config_;
  Variant variant_;
  LowLevelEncoder low_;
  std::optional<HighLevelEncoder> prior_;  // full only
  HighLevelEncoder contrastive_;           // h_c, or the shared encoder for TI
  std::optional<ParsingDecoder> decoder_;
  ProjectionHead motion_head_, appearance_head_;
};

Tensor concat_representation(const Tensor& z_h, const Tensor& z_c);

// Key encoder: shadow copy of (f_l, h_c, g_a), updated only by momentum.
class MomentumEncoder {
 public:
  explicit MomentumEncoder(const Model& model);

  Tensor key(const Tensor& clip_frames) const;
  Tensor key(const VideoClip& clip) const { return key(clip.frames); }
  // shadow <- m * shadow + (1 - m) * student for every mirrored parameter.
  void update(const Model& model, double momentum);

  std::vector<NamedParam> parameters();
  std::vector<ConstNamedParam> parameters() const;

 private:
  std::string contrastive_group_;
  LowLevelEncoder low_;
  HighLevelEncoder high_;
  ProjectionHead head_;
};

// Elementwise shadow <- m * shadow + (1 - m) * student over name-matched pairs.
// Throws std::invalid_argument on name or shape mismatch.
void momentum_update(const std::vector<ConstNamedParam>& student,
                     const std::vector<NamedParam>& shadow, double momentum);

}  // namespace mtvssl
