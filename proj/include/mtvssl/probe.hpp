#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtvssl/config.hpp"
#include "mtvssl/model.hpp"
#include "mtvssl/video.hpp"

namespace mtvssl {

struct ProbeResult {
  std::string variant;
  std::uint64_t seed = 0;
  std::size_t num_classes = 0;
  double acc_at_1 = 0.0;
  double acc_at_5 = 0.0;
  std::vector<double> per_class_accuracy;
};

// Feature vectors with labels; `groups` ties clips of the same video together
// so test scores can be averaged per video.
struct LabeledFeatures {
  std::vector<std::vector<double>> features;
  std::vector<int> labels;
  std::vector<std::size_t> groups;
  std::vector<std::string> video_ids;

  std::size_t size() const { return features.size(); }
  void add(std::vector<double> f, int label, std::size_t group, const std::string& id);
};

// Deterministic evaluation clips: `count` starts spread evenly over the
// admissible range (a single clip is centred), resized to (out_h, out_w).
std::vector<VideoClip> evaluation_clips(const SourceVideo& video, std::size_t speed,
                                        std::size_t length, std::size_t count, std::size_t out_h,
                                        std::size_t out_w);

// [z_h || z_c], or z_c alone for no_kd.
Tensor extract_representation(const Model& model, const VideoClip& clip);

LabeledFeatures extract_features(const Model& model, const std::vector<SourceVideo>& videos,
                                 const EvalConfig& eval);

// Fraction of rows whose label is among the k highest scores. Ties are broken
// towards the smaller class index.
double topk_accuracy(const std::vector<std::vector<double>>& scores, const std::vector<int>& labels,
                     std::size_t k);

// Multinomial logistic regression on z-scored inputs, trained by full-batch
// gradient descent from zero weights.
class LinearClassifier {
 public:
  struct Options {
    std::size_t iterations = 500;
    double learning_rate = 0.5;
    double l2 = 1e-4;
  };

  LinearClassifier() = default;
  static LinearClassifier train(const LabeledFeatures& data, std::size_t num_classes,
                                const Options& options);

  std::vector<double> scores(std::span<const double> x) const;
  std::size_t classes() const { return classes_; }
  std::size_t dim() const { return dim_; }
  // Class weights in the raw (unstandardised) input space, (classes, dim) row-major.
  std::vector<double> raw_weights() const;
  std::vector<double> raw_bias() const;
  // Classifier acting directly on raw inputs.
  static LinearClassifier from_raw(std::size_t classes, std::size_t dim, std::vector<double> weights,
                                   std::vector<double> bias);

 private:
  std::size_t classes_ = 0, dim_ = 0;
  std::vector<double> mean_, inv_std_;
  std::vector<double> weights_, bias_;  // standardised space
};

// Per-video scores (mean over the video's clips), in first-appearance order.
struct VideoScores {
  std::vector<std::vector<double>> scores;
  std::vector<int> labels;
};
VideoScores score_videos(const LinearClassifier& classifier, const LabeledFeatures& data);

// Trains on `train`, reports Acc@1 / Acc@5 on `test`. Throws when a test class
// is missing from training or a video id appears in both splits.
ProbeResult linear_probe(const LabeledFeatures& train, const LabeledFeatures& test,
                         std::size_t num_classes, const LinearClassifier::Options& options);

// All weights trainable: a linear head on the representation is fitted first,
// then head and backbone are trained jointly with SGD on cross-entropy.
ProbeResult finetune_probe(const Model& model, const std::vector<SourceVideo>& train,
                           const std::vector<SourceVideo>& test, std::size_t num_classes,
                           const EvalConfig& eval, std::uint64_t seed);

// Linear or fine-tune according to eval.mode.
ProbeResult evaluate_model(const Model& model, const std::vector<SourceVideo>& train,
                           const std::vector<SourceVideo>& test, std::size_t num_classes,
                           const EvalConfig& eval, std::uint64_t seed);

std::size_t count_classes(const std::vector<SourceVideo>& videos);

}  // namespace mtvssl
