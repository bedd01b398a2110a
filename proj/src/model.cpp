#include "mtvssl/model.hpp"

#include <stdexcept>

namespace mtvssl {

Variant variant_from_string(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "no_kd") return Variant::no_kd;
  if (name == "task_independent") return Variant::task_independent;
  throw std::invalid_argument("unknown variant '" + name +
                              "' (expected full, no_kd or task_independent)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_kd: return "no_kd";
    case Variant::task_independent: return "task_independent";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (clip_length == 0 || input_height == 0 || input_width == 0) {
    throw std::invalid_argument("model: empty input shape");
  }
  if (conv_channels.empty()) throw std::invalid_argument("model: conv_channels is empty");
  if (split_depth < 1 || split_depth > conv_channels.size()) {
    throw std::invalid_argument("model: split_depth must lie in [1, number of conv layers]");
  }
  if (hidden_dim == 0 || embedding_dim == 0 || projection_dim == 0 || decoder_channels == 0 ||
      decoder_grid == 0) {
    throw std::invalid_argument("model: zero-sized layer");
  }
  if (parsing_classes < 2) throw std::invalid_argument("model: parsing_classes must be >= 2");
  for (std::size_t c : conv_channels) {
    if (c == 0) throw std::invalid_argument("model: zero conv channels");
  }
}

namespace {

std::array<std::size_t, 3> stride_for_layer(std::size_t index) {
  return index == 0 ? std::array<std::size_t, 3>{1, 2, 2} : std::array<std::size_t, 3>{2, 2, 2};
}

}  // namespace

LowLevelEncoder::LowLevelEncoder(const ModelConfig& config) {
  std::size_t in = 3;
  for (std::size_t i = 0; i < config.split_depth; ++i) {
    layers_.emplace_back(in, config.conv_channels[i], stride_for_layer(i));
    in = config.conv_channels[i];
  }
}

Tensor LowLevelEncoder::forward(const Tensor& input, Trace* trace) const {
  if (trace) trace->layers.assign(layers_.size(), {});
  Tensor x = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].forward(x, trace ? &trace->layers[i] : nullptr);
  }
  return x;
}

Tensor LowLevelEncoder::backward(const Trace& trace, const Tensor& grad) {
  Tensor g = grad;
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i].backward(trace.layers[i], g);
  return g;
}

void LowLevelEncoder::init(std::uint64_t seed, const std::string& prefix) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].init(seed, prefix + ".conv" + std::to_string(i));
  }
}

std::vector<Tensor> LowLevelEncoder::calibrate(std::vector<Tensor> inputs) {
  for (Conv3dRelu& layer : layers_) {
    layer.standardize(inputs);
    for (Tensor& x : inputs) x = layer.forward(x, nullptr);
  }
  return inputs;
}

void LowLevelEncoder::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].collect(prefix + ".conv" + std::to_string(i), out);
  }
}

HighLevelEncoder::HighLevelEncoder(const ModelConfig& config) {
  std::size_t in = config.conv_channels[config.split_depth - 1];
  for (std::size_t i = config.split_depth; i < config.conv_channels.size(); ++i) {
    convs_.emplace_back(in, config.conv_channels[i], stride_for_layer(i));
    in = config.conv_channels[i];
  }
  fc1_ = Linear(in, config.hidden_dim);
  fc2_ = Linear(config.hidden_dim, config.embedding_dim);
}

Tensor HighLevelEncoder::forward(const Tensor& features, Trace* trace) const {
  if (trace) trace->convs.assign(convs_.size(), {});
  Tensor x = features;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    x = convs_[i].forward(x, trace ? &trace->convs[i] : nullptr);
  }
  const Shape pooled_from = x.shape();
  Tensor pooled = global_average_pool(x);
  Tensor hidden = relu(fc1_.forward(pooled));
  Tensor z = fc2_.forward(hidden);
  if (trace) {
    trace->pooled_from = pooled_from;
    trace->pooled = std::move(pooled);
    trace->hidden = std::move(hidden);
  }
  return z;
}

Tensor HighLevelEncoder::backward(const Trace& trace, const Tensor& grad_z) {
  Tensor g_hidden = relu_backward(trace.hidden, fc2_.backward(trace.hidden, grad_z));
  Tensor g_pooled = fc1_.backward(trace.pooled, g_hidden);
  Tensor g = global_average_pool_backward(trace.pooled_from, g_pooled);
  for (std::size_t i = convs_.size(); i-- > 0;) g = convs_[i].backward(trace.convs[i], g);
  return g;
}

void HighLevelEncoder::init(std::uint64_t seed, const std::string& prefix) {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].init(seed, prefix + ".conv" + std::to_string(i));
  }
  fc1_.init(seed, prefix + ".fc1");
  fc2_.init(seed, prefix + ".fc2");
}

std::vector<Tensor> HighLevelEncoder::calibrate(std::vector<Tensor> features) {
  for (Conv3dRelu& conv : convs_) {
    conv.standardize(features);
    for (Tensor& x : features) x = conv.forward(x, nullptr);
  }
  for (Tensor& x : features) x = global_average_pool(x);
  fc1_.standardize(features);
  for (Tensor& x : features) x = relu(fc1_.forward(x));
  fc2_.standardize(features);
  for (Tensor& x : features) x = fc2_.forward(x);
  return features;
}

void HighLevelEncoder::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].collect(prefix + ".conv" + std::to_string(i), out);
  }
  fc1_.collect(prefix + ".fc1", out);
  fc2_.collect(prefix + ".fc2", out);
}

ParsingDecoder::ParsingDecoder(const ModelConfig& config)
    : channels_(config.decoder_channels),
      grid_(config.decoder_grid),
      fc_(config.embedding_dim, config.decoder_channels * config.decoder_grid * config.decoder_grid),
      up_(config.decoder_channels, config.parsing_classes) {}

Tensor ParsingDecoder::logits(const Tensor& z) const {
  Tensor grid = relu(fc_.forward(z));
  grid.reshape({channels_, grid_, grid_});
  return up_.forward(grid);
}

SegmentationProbMap ParsingDecoder::forward(const Tensor& z, Trace* trace) const {
  Tensor grid = relu(fc_.forward(z));
  grid.reshape({channels_, grid_, grid_});
  SegmentationProbMap probs = softmax_classes(up_.forward(grid));
  if (trace) {
    trace->z = z;
    trace->grid = std::move(grid);
    trace->probs = probs.probs();
  }
  return probs;
}

Tensor ParsingDecoder::backward(const Trace& trace, const Tensor& grad_probs) {
  const Tensor g_logits = softmax_classes_backward(trace.probs, grad_probs);
  Tensor g_grid = relu_backward(trace.grid, up_.backward(trace.grid, g_logits));
  g_grid.reshape({g_grid.size()});
  return fc_.backward(trace.z, g_grid);
}

void ParsingDecoder::init(std::uint64_t seed, const std::string& prefix) {
  fc_.init(seed, prefix + ".fc");
  up_.init(seed, prefix + ".up");
}

void ParsingDecoder::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  fc_.collect(prefix + ".fc", out);
  up_.collect(prefix + ".up", out);
}

ProjectionHead::ProjectionHead(const ModelConfig& config)
    : fc1_(config.embedding_dim, config.embedding_dim),
      fc2_(config.embedding_dim, config.projection_dim) {}

Tensor ProjectionHead::forward(const Tensor& z, Trace* trace) const {
  Tensor hidden = relu(fc1_.forward(z));
  Tensor raw = fc2_.forward(hidden);
  Tensor out = l2_normalize(raw);
  if (trace) {
    trace->z = z;
    trace->hidden = std::move(hidden);
    trace->raw = std::move(raw);
  }
  return out;
}

Tensor ProjectionHead::backward(const Trace& trace, const Tensor& grad_out) {
  const Tensor g_raw = l2_normalize_backward(trace.raw, grad_out);
  const Tensor g_hidden = relu_backward(trace.hidden, fc2_.backward(trace.hidden, g_raw));
  return fc1_.backward(trace.z, g_hidden);
}

void ProjectionHead::calibrate(const std::vector<Tensor>& z) {
  fc1_.standardize(z);
  std::vector<Tensor> hidden;
  for (const Tensor& x : z) hidden.push_back(relu(fc1_.forward(x)));
  fc2_.standardize(hidden);
}

void ProjectionHead::init(std::uint64_t seed, const std::string& prefix) {
  fc1_.init(seed, prefix + ".fc1");
  fc2_.init(seed, prefix + ".fc2");
}

void ProjectionHead::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  fc1_.collect(prefix + ".fc1", out);
  fc2_.collect(prefix + ".fc2", out);
}

Tensor to_network_input(const Tensor& clip) {
  if (clip.rank() != 4 || clip.dim(3) != 3) {
    throw std::invalid_argument("clip must be (T, H, W, 3), got " + shape_to_string(clip.shape()));
  }
  const std::size_t T = clip.dim(0), H = clip.dim(1), W = clip.dim(2);
  Tensor x({3, T, H, W});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        for (std::size_t c = 0; c < 3; ++c)
          x[((c * T + t) * H + y) * W + xx] =
              (clip[((t * H + y) * W + xx) * 3 + c] - kInputMean) / kInputStd;
  return x;
}

Tensor from_network_input_grad(const Tensor& grad) {
  const std::size_t T = grad.dim(1), H = grad.dim(2), W = grad.dim(3);
  Tensor out({T, H, W, 3});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
          out[((t * H + y) * W + x) * 3 + c] = grad[((c * T + t) * H + y) * W + x] / kInputStd;
  return out;
}

Model::Model(const ModelConfig& config, Variant variant, std::uint64_t seed)
    : config_(config), variant_(variant) {
  config_.validate();
  low_ = LowLevelEncoder(config_);
  low_.init(seed, "low");
  if (variant_ == Variant::full) {
    prior_ = HighLevelEncoder(config_);
    prior_->init(seed, prior_group());
  }
  contrastive_ = HighLevelEncoder(config_);
  contrastive_.init(seed, contrastive_group());
  if (has_decoder()) {
    decoder_ = ParsingDecoder(config_);
    decoder_->init(seed, "decoder");
  }
  motion_head_ = ProjectionHead(config_);
  motion_head_.init(seed, "motion_head");
  appearance_head_ = ProjectionHead(config_);
  appearance_head_.init(seed, "appearance_head");
}

std::string Model::contrastive_group() const {
  return variant_ == Variant::task_independent ? "shared_encoder" : "contrastive_encoder";
}

std::string Model::prior_group() const {
  switch (variant_) {
    case Variant::full: return "prior_encoder";
    case Variant::task_independent: return "shared_encoder";
    case Variant::no_kd: return "";
  }
  return "";
}

std::size_t Model::representation_dim() const {
  return variant_ == Variant::no_kd ? config_.embedding_dim : 2 * config_.embedding_dim;
}

const HighLevelEncoder& Model::contrastive_encoder() const { return contrastive_; }
HighLevelEncoder& Model::contrastive_encoder() { return contrastive_; }

void Model::calibrate(const std::vector<Tensor>& clip_frames) {
  if (clip_frames.size() < 2) throw std::invalid_argument("model: calibration needs at least 2 clips");
  std::vector<Tensor> inputs;
  for (const Tensor& c : clip_frames) inputs.push_back(to_network_input(c));
  const std::vector<Tensor> features = low_.calibrate(std::move(inputs));
  if (prior_) prior_->calibrate(features);
  const std::vector<Tensor> z_c = contrastive_.calibrate(features);
  motion_head_.calibrate(z_c);
  appearance_head_.calibrate(z_c);
}

Model::Forward Model::forward(const Tensor& clip_frames, ForwardOutputs wanted) const {
  if (clip_frames.rank() != 4 || clip_frames.dim(0) != config_.clip_length ||
      clip_frames.dim(1) != config_.input_height || clip_frames.dim(2) != config_.input_width ||
      clip_frames.dim(3) != 3) {
    throw std::invalid_argument("model: clip shape " + shape_to_string(clip_frames.shape()) +
                                " does not match configured (" +
                                std::to_string(config_.clip_length) + ", " +
                                std::to_string(config_.input_height) + ", " +
                                std::to_string(config_.input_width) + ", 3)");
  }
  Forward f;
  const Tensor input = to_network_input(clip_frames);
  f.input_shape = input.shape();
  f.features = low_.forward(input, &f.low);
  f.z_c = contrastive_.forward(f.features, &f.contrastive_trace);
  if (variant_ == Variant::full) {
    f.z_h = prior_->forward(f.features, &f.prior_trace);
  } else if (variant_ == Variant::task_independent) {
    f.z_h = f.z_c;
  }
  if (has_decoder() && wanted.parsing) f.parsing = decoder_->forward(f.z_h, &f.decoder_trace);
  if (wanted.motion) f.motion = motion_head_.forward(f.z_c, &f.motion_trace);
  if (wanted.appearance) f.appearance = appearance_head_.forward(f.z_c, &f.appearance_trace);
  return f;
}

Tensor Model::backward(const Forward& f, const OutputGrads& grads) {
  Tensor d_zc;
  Tensor d_zh;
  auto accumulate = [](Tensor& acc, const Tensor& g) {
    if (acc.empty()) {
      acc = g;
    } else {
      axpy(1.0, g.span(), acc.span());
    }
  };
  if (!grads.parsing.empty()) {
    if (!has_decoder()) throw std::logic_error("model: parsing gradient for a variant without decoder");
    const Tensor g = decoder_->backward(f.decoder_trace, grads.parsing);
    accumulate(variant_ == Variant::full ? d_zh : d_zc, g);
  }
  if (!grads.motion.empty()) accumulate(d_zc, motion_head_.backward(f.motion_trace, grads.motion));
  if (!grads.appearance.empty()) {
    accumulate(d_zc, appearance_head_.backward(f.appearance_trace, grads.appearance));
  }
  if (!grads.z_c.empty()) accumulate(d_zc, grads.z_c);
  if (!grads.z_h.empty()) {
    if (variant_ == Variant::no_kd) throw std::logic_error("model: z_h gradient for no_kd variant");
    accumulate(variant_ == Variant::full ? d_zh : d_zc, grads.z_h);
  }
  Tensor d_features;
  if (!d_zh.empty()) accumulate(d_features, prior_->backward(f.prior_trace, d_zh));
  if (!d_zc.empty()) accumulate(d_features, contrastive_.backward(f.contrastive_trace, d_zc));
  if (d_features.empty()) return Tensor({config_.clip_length, config_.input_height, config_.input_width, 3});
  return from_network_input_grad(low_.backward(f.low, d_features));
}

Tensor Model::shared_features(const Tensor& clip_frames) const {
  return low_.forward(to_network_input(clip_frames), nullptr);
}

Tensor Model::encode_prior(const VideoClip& clip) const {
  if (variant_ == Variant::no_kd) throw std::logic_error("model: no_kd variant has no prior branch");
  return forward(clip, {false, false, false}).z_h;
}

Tensor Model::encode_contrastive(const VideoClip& clip) const {
  return forward(clip, {false, false, false}).z_c;
}

SegmentationProbMap Model::decode_parsing(const Tensor& z_h) const {
  if (!decoder_) throw std::logic_error("model: variant has no parsing decoder");
  return decoder_->forward(z_h, nullptr);
}

Tensor Model::project_motion(const Tensor& z_c) const { return motion_head_.forward(z_c, nullptr); }
Tensor Model::project_appearance(const Tensor& z_c) const {
  return appearance_head_.forward(z_c, nullptr);
}

Tensor Model::representation(const VideoClip& clip) const {
  const Forward f = forward(clip, {false, false, false});
  if (variant_ == Variant::no_kd) return f.z_c;
  return concat_representation(f.z_h, f.z_c);
}

std::vector<NamedParam> Model::parameters() {
  std::vector<NamedParam> out;
  low_.collect("low", out);
  if (prior_) prior_->collect(prior_group(), out);
  contrastive_.collect(contrastive_group(), out);
  if (decoder_) decoder_->collect("decoder", out);
  motion_head_.collect("motion_head", out);
  appearance_head_.collect("appearance_head", out);
  return out;
}

std::vector<ConstNamedParam> Model::parameters() const {
  std::vector<ConstNamedParam> out;
  for (const auto& p : const_cast<Model*>(this)->parameters()) out.push_back({p.name, p.param});
  return out;
}

std::vector<NamedParam> Model::parameters_in(const std::string& group) {
  std::vector<NamedParam> out;
  for (auto& p : parameters()) {
    if (p.name.rfind(group + ".", 0) == 0) out.push_back(p);
  }
  return out;
}

std::vector<std::string> Model::groups() const {
  std::vector<std::string> g{"low"};
  if (prior_) g.push_back(prior_group());
  g.push_back(contrastive_group());
  if (decoder_) g.push_back("decoder");
  g.push_back("motion_head");
  g.push_back("appearance_head");
  return g;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.param->value.size();
  return n;
}

void Model::zero_grad() {
  for (auto& p : parameters()) p.param->zero_grad();
}

Tensor concat_representation(const Tensor& z_h, const Tensor& z_c) {
  if (z_h.empty() || z_c.empty()) throw std::invalid_argument("concat_representation: missing branch output");
  std::vector<double> v(z_h.values());
  v.insert(v.end(), z_c.values().begin(), z_c.values().end());
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

MomentumEncoder::MomentumEncoder(const Model& model)
    : contrastive_group_(model.contrastive_group()),
      low_(model.low_),
      high_(model.contrastive_),
      head_(model.appearance_head_) {
  for (auto& p : parameters()) p.param->grad = Tensor();
}

Tensor MomentumEncoder::key(const Tensor& clip_frames) const {
  const Tensor features = low_.forward(to_network_input(clip_frames), nullptr);
  return head_.forward(high_.forward(features, nullptr), nullptr);
}

std::vector<NamedParam> MomentumEncoder::parameters() {
  std::vector<NamedParam> out;
  low_.collect("low", out);
  high_.collect(contrastive_group_, out);
  head_.collect("appearance_head", out);
  return out;
}

std::vector<ConstNamedParam> MomentumEncoder::parameters() const {
  std::vector<ConstNamedParam> out;
  for (const auto& p : const_cast<MomentumEncoder*>(this)->parameters()) {
    out.push_back({p.name, p.param});
  }
  return out;
}

void MomentumEncoder::update(const Model& model, double momentum) {
  std::vector<ConstNamedParam> student;
  const auto shadow = parameters();
  for (const auto& p : model.parameters()) {
    for (const auto& s : shadow) {
      if (s.name == p.name) {
        student.push_back(p);
        break;
      }
    }
  }
  momentum_update(student, shadow, momentum);
}

void momentum_update(const std::vector<ConstNamedParam>& student,
                     const std::vector<NamedParam>& shadow, double momentum) {
  if (momentum < 0.0 || momentum > 1.0) throw std::invalid_argument("momentum must lie in [0, 1]");
  if (student.size() != shadow.size()) {
    throw std::invalid_argument("momentum_update: parameter count mismatch");
  }
  for (std::size_t i = 0; i < shadow.size(); ++i) {
    const Tensor& src = student[i].param->value;
    Tensor& dst = shadow[i].param->value;
    if (student[i].name != shadow[i].name || src.shape() != dst.shape()) {
      throw std::invalid_argument("momentum_update: mismatch at " + shadow[i].name);
    }
    for (std::size_t k = 0; k < dst.size(); ++k) {
      dst[k] = momentum * dst[k] + (1.0 - momentum) * src[k];
    }
  }
}

}  // namespace mtvssl
