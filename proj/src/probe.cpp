#include "mtvssl/probe.hpp"

#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "mtvssl/rng.hpp"

namespace mtvssl {

void LabeledFeatures::add(std::vector<double> f, int label, std::size_t group,
                          const std::string& id) {
  features.push_back(std::move(f));
  labels.push_back(label);
  groups.push_back(group);
  video_ids.push_back(id);
}

std::vector<VideoClip> evaluation_clips(const SourceVideo& video, std::size_t speed,
                                        std::size_t length, std::size_t count, std::size_t out_h,
                                        std::size_t out_w) {
  const std::size_t span = (length - 1) * speed + 1;
  if (span > video.frame_count()) {
    throw std::out_of_range(video.video_id + ": " + std::to_string(video.frame_count()) +
                            " frames cannot hold a clip of length " + std::to_string(length) +
                            " at speed " + std::to_string(speed));
  }
  const std::size_t last_start = video.frame_count() - span;
  std::vector<VideoClip> clips;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t start =
        count == 1 ? last_start / 2 : (k * last_start + (count - 1) / 2) / (count - 1);
    VideoClip clip = sample_clip(video, speed, length, start);
    if (clip.frames.dim(1) != out_h || clip.frames.dim(2) != out_w) {
      clip = resize_clip(clip, out_h, out_w);
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

Tensor extract_representation(const Model& model, const VideoClip& clip) {
  return model.representation(clip);
}

LabeledFeatures extract_features(const Model& model, const std::vector<SourceVideo>& videos,
                                 const EvalConfig& eval) {
  const auto& mc = model.config();
  std::vector<std::vector<std::vector<double>>> per_video(videos.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t v = 0; v < videos.size(); ++v) {
    for (const auto& clip : evaluation_clips(videos[v], eval.eval_speed, mc.clip_length,
                                             eval.clips_per_video, mc.input_height,
                                             mc.input_width)) {
      per_video[v].push_back(extract_representation(model, clip).values());
    }
  }
  LabeledFeatures out;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    for (auto& f : per_video[v]) out.add(std::move(f), videos[v].action_label, v, videos[v].video_id);
  }
  return out;
}

double topk_accuracy(const std::vector<std::vector<double>>& scores, const std::vector<int>& labels,
                     std::size_t k) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("topk_accuracy: " + std::to_string(scores.size()) +
                                " score rows but " + std::to_string(labels.size()) + " labels");
  }
  if (scores.empty()) throw std::invalid_argument("topk_accuracy: no samples");
  const std::size_t classes = scores.front().size();
  if (k == 0 || k > classes) {
    throw std::invalid_argument("topk_accuracy: k=" + std::to_string(k) + " with " +
                                std::to_string(classes) + " classes");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& row = scores[i];
    if (row.size() != classes) throw std::invalid_argument("topk_accuracy: ragged score rows");
    const auto label = static_cast<std::size_t>(labels[i]);
    if (labels[i] < 0 || label >= classes) {
      throw std::invalid_argument("topk_accuracy: label out of range");
    }
    // Rank of the true class: classes scoring higher, or equal with a smaller index.
    std::size_t ahead = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      if (row[c] > row[label] || (row[c] == row[label] && c < label)) ++ahead;
    }
    if (ahead < k) ++hits;
  }
  return double(hits) / double(scores.size());
}

namespace {

void softmax_inplace(std::vector<double>& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

}  // namespace

LinearClassifier LinearClassifier::train(const LabeledFeatures& data, std::size_t num_classes,
                                         const Options& options) {
  if (data.size() == 0) throw std::invalid_argument("linear probe: empty training set");
  if (num_classes < 2) throw std::invalid_argument("linear probe: needs at least 2 classes");
  LinearClassifier lc;
  lc.classes_ = num_classes;
  lc.dim_ = data.features.front().size();
  const std::size_t n = data.size(), d = lc.dim_;

  lc.mean_.assign(d, 0.0);
  lc.inv_std_.assign(d, 0.0);
  for (const auto& f : data.features) {
    if (f.size() != d) throw std::invalid_argument("linear probe: ragged features");
    for (std::size_t j = 0; j < d; ++j) lc.mean_[j] += f[j] / double(n);
  }
  for (const auto& f : data.features) {
    for (std::size_t j = 0; j < d; ++j) lc.inv_std_[j] += (f[j] - lc.mean_[j]) * (f[j] - lc.mean_[j]);
  }
  for (auto& s : lc.inv_std_) {
    const double sd = std::sqrt(s / double(n));
    s = sd > 1e-8 ? 1.0 / sd : 0.0;  // constant features carry no information
  }
  std::vector<std::vector<double>> x(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x[i][j] = (data.features[i][j] - lc.mean_[j]) * lc.inv_std_[j];
    if (data.labels[i] < 0 || std::size_t(data.labels[i]) >= num_classes) {
      throw std::invalid_argument("linear probe: label out of range");
    }
  }

  lc.weights_.assign(num_classes * d, 0.0);
  lc.bias_.assign(num_classes, 0.0);
  std::vector<double> gw(num_classes * d), gb(num_classes), p(num_classes);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < num_classes; ++c) {
        p[c] = lc.bias_[c] + dot(std::span(lc.weights_).subspan(c * d, d), x[i]);
      }
      softmax_inplace(p);
      p[std::size_t(data.labels[i])] -= 1.0;
      for (std::size_t c = 0; c < num_classes; ++c) {
        gb[c] += p[c] / double(n);
        axpy(p[c] / double(n), x[i], std::span(gw).subspan(c * d, d));
      }
    }
    for (std::size_t k = 0; k < gw.size(); ++k) {
      lc.weights_[k] -= options.learning_rate * (gw[k] + options.l2 * lc.weights_[k]);
    }
    for (std::size_t c = 0; c < num_classes; ++c) lc.bias_[c] -= options.learning_rate * gb[c];
  }
  return lc;
}

LinearClassifier LinearClassifier::from_raw(std::size_t classes, std::size_t dim,
                                            std::vector<double> weights, std::vector<double> bias) {
  if (weights.size() != classes * dim || bias.size() != classes) {
    throw std::invalid_argument("LinearClassifier::from_raw: size mismatch");
  }
  LinearClassifier lc;
  lc.classes_ = classes;
  lc.dim_ = dim;
  lc.mean_.assign(dim, 0.0);
  lc.inv_std_.assign(dim, 1.0);
  lc.weights_ = std::move(weights);
  lc.bias_ = std::move(bias);
  return lc;
}

std::vector<double> LinearClassifier::scores(std::span<const double> x) const {
  if (x.size() != dim_) {
    throw std::invalid_argument("classifier expects " + std::to_string(dim_) +
                                "-dim input, got " + std::to_string(x.size()));
  }
  std::vector<double> s(classes_);
  for (std::size_t c = 0; c < classes_; ++c) {
    double acc = bias_[c];
    for (std::size_t j = 0; j < dim_; ++j) acc += weights_[c * dim_ + j] * (x[j] - mean_[j]) * inv_std_[j];
    s[c] = acc;
  }
  return s;
}

std::vector<double> LinearClassifier::raw_weights() const {
  std::vector<double> w(weights_.size());
  for (std::size_t c = 0; c < classes_; ++c) {
    for (std::size_t j = 0; j < dim_; ++j) w[c * dim_ + j] = weights_[c * dim_ + j] * inv_std_[j];
  }
  return w;
}

std::vector<double> LinearClassifier::raw_bias() const {
  const auto w = raw_weights();
  std::vector<double> b = bias_;
  for (std::size_t c = 0; c < classes_; ++c) {
    for (std::size_t j = 0; j < dim_; ++j) b[c] -= w[c * dim_ + j] * mean_[j];
  }
  return b;
}

VideoScores score_videos(const LinearClassifier& classifier, const LabeledFeatures& data) {
  VideoScores out;
  std::map<std::size_t, std::size_t> slot;
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto s = classifier.scores(data.features[i]);
    auto [it, inserted] = slot.try_emplace(data.groups[i], out.scores.size());
    if (inserted) {
      out.scores.push_back(std::vector<double>(s.size(), 0.0));
      out.labels.push_back(data.labels[i]);
      counts.push_back(0);
    }
    axpy(1.0, s, out.scores[it->second]);
    ++counts[it->second];
  }
  for (std::size_t v = 0; v < out.scores.size(); ++v) {
    for (auto& x : out.scores[v]) x /= double(counts[v]);
  }
  return out;
}

namespace {

ProbeResult summarize(const VideoScores& vs, std::size_t num_classes) {
  ProbeResult r;
  r.num_classes = num_classes;
  r.acc_at_1 = topk_accuracy(vs.scores, vs.labels, 1);
  r.acc_at_5 = topk_accuracy(vs.scores, vs.labels, std::min<std::size_t>(5, num_classes));
  std::vector<double> hit(num_classes, 0.0), total(num_classes, 0.0);
  for (std::size_t i = 0; i < vs.scores.size(); ++i) {
    const auto label = std::size_t(vs.labels[i]);
    total[label] += 1.0;
    if (topk_accuracy({vs.scores[i]}, {vs.labels[i]}, 1) == 1.0) hit[label] += 1.0;
  }
  r.per_class_accuracy.resize(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    r.per_class_accuracy[c] = total[c] > 0 ? hit[c] / total[c] : 0.0;
  }
  return r;
}

void check_splits(const LabeledFeatures& train, const LabeledFeatures& test,
                  std::size_t num_classes) {
  std::set<int> train_classes(train.labels.begin(), train.labels.end());
  for (int label : test.labels) {
    if (!train_classes.count(label)) {
      throw std::invalid_argument("class " + std::to_string(label) +
                                  " is missing from the probe training split");
    }
    if (label < 0 || std::size_t(label) >= num_classes) {
      throw std::invalid_argument("test label out of range");
    }
  }
  std::set<std::string> train_ids(train.video_ids.begin(), train.video_ids.end());
  for (const auto& id : test.video_ids) {
    if (!id.empty() && train_ids.count(id)) {
      throw std::invalid_argument("video '" + id + "' appears in both probe splits");
    }
  }
}

}  // namespace

ProbeResult linear_probe(const LabeledFeatures& train, const LabeledFeatures& test,
                         std::size_t num_classes, const LinearClassifier::Options& options) {
  check_splits(train, test, num_classes);
  const auto classifier = LinearClassifier::train(train, num_classes, options);
  return summarize(score_videos(classifier, test), num_classes);
}

ProbeResult finetune_probe(const Model& pretrained, const std::vector<SourceVideo>& train,
                           const std::vector<SourceVideo>& test, std::size_t num_classes,
                           const EvalConfig& eval, std::uint64_t seed) {
  Model model = pretrained;
  const auto& mc = model.config();
  const LinearClassifier::Options opts{eval.probe_iterations, eval.probe_lr, eval.probe_l2};
  const auto train_features = extract_features(model, train, eval);
  check_splits(train_features, extract_features(model, test, eval), num_classes);
  const auto init = LinearClassifier::train(train_features, num_classes, opts);
  const std::size_t d = init.dim();
  std::vector<double> w = init.raw_weights(), b = init.raw_bias();

  std::vector<std::pair<std::size_t, VideoClip>> clips;
  for (std::size_t v = 0; v < train.size(); ++v) {
    for (auto& c : evaluation_clips(train[v], eval.eval_speed, mc.clip_length,
                                    eval.clips_per_video, mc.input_height, mc.input_width)) {
      clips.emplace_back(v, std::move(c));
    }
  }
  Rng rng(derive_seed(seed, 0x66696e65ULL));
  std::vector<std::size_t> order(clips.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const bool split = model.variant() != Variant::no_kd;
  for (std::size_t epoch = 0; epoch < eval.finetune_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[std::size_t(rng.uniform_int(0, std::int64_t(i) - 1))]);
    }
    for (std::size_t idx : order) {
      const auto& [v, clip] = clips[idx];
      const auto f = model.forward(clip, {false, false, false});
      const Tensor rep = split ? concat_representation(f.z_h, f.z_c) : f.z_c;
      std::vector<double> p(num_classes);
      for (std::size_t c = 0; c < num_classes; ++c) {
        p[c] = b[c] + dot(std::span(w).subspan(c * d, d), rep.span());
      }
      softmax_inplace(p);
      p[std::size_t(train[v].action_label)] -= 1.0;
      std::vector<double> d_rep(d, 0.0);
      for (std::size_t c = 0; c < num_classes; ++c) {
        axpy(p[c], std::span<const double>(w).subspan(c * d, d), d_rep);
      }
      for (std::size_t c = 0; c < num_classes; ++c) {
        axpy(-eval.finetune_lr * p[c], rep.span(), std::span(w).subspan(c * d, d));
        b[c] -= eval.finetune_lr * p[c];
      }
      model.zero_grad();
      Model::OutputGrads grads;
      if (split) {
        const std::size_t e = f.z_c.size();
        grads.z_h = Tensor({e}, std::vector<double>(d_rep.begin(), d_rep.begin() + std::ptrdiff_t(e)));
        grads.z_c = Tensor({e}, std::vector<double>(d_rep.begin() + std::ptrdiff_t(e), d_rep.end()));
      } else {
        grads.z_c = Tensor({d}, d_rep);
      }
      model.backward(f, grads);
      for (auto& prm : model.parameters()) {
        axpy(-eval.finetune_lr, prm.param->grad.span(), prm.param->value.span());
      }
    }
  }
  const auto head = LinearClassifier::from_raw(num_classes, d, std::move(w), std::move(b));
  return summarize(score_videos(head, extract_features(model, test, eval)), num_classes);
}

ProbeResult evaluate_model(const Model& model, const std::vector<SourceVideo>& train,
                           const std::vector<SourceVideo>& test, std::size_t num_classes,
                           const EvalConfig& eval, std::uint64_t seed) {
  ProbeResult r;
  if (eval.mode == ProbeMode::finetune) {
    r = finetune_probe(model, train, test, num_classes, eval, seed);
  } else {
    r = linear_probe(extract_features(model, train, eval), extract_features(model, test, eval),
                     num_classes, {eval.probe_iterations, eval.probe_lr, eval.probe_l2});
  }
  r.variant = to_string(model.variant());
  r.seed = seed;
  return r;
}

std::size_t count_classes(const std::vector<SourceVideo>& videos) {
  int mx = -1;
  for (const auto& v : videos) mx = std::max(mx, v.action_label);
  return std::size_t(mx + 1);
}

}  // namespace mtvssl
