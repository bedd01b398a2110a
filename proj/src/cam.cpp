#include "mtvssl/cam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mtvssl/layers.hpp"

namespace mtvssl {

Tensor cam_from_features(const Tensor& features, std::span<const double> class_weights,
                         std::size_t out_h, std::size_t out_w) {
  if (features.rank() != 4) throw std::invalid_argument("cam: features must be (C, T, h, w)");
  const std::size_t c = features.dim(0), t = features.dim(1), h = features.dim(2),
                    w = features.dim(3);
  if (class_weights.size() != c) {
    throw std::invalid_argument("cam: " + std::to_string(class_weights.size()) +
                                " class weights for " + std::to_string(c) + " feature channels");
  }
  Tensor raw({h, w, 1});
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t f = 0; f < t; ++f) {
      const double* plane = features.data() + (k * t + f) * h * w;
      for (std::size_t i = 0; i < h * w; ++i) raw[i] += class_weights[k] * plane[i];
    }
  }
  for (auto& v : raw.values()) v = std::max(0.0, v / double(t));

  Tensor heat({out_h, out_w});
  double px[1];
  for (std::size_t i = 0; i < out_h; ++i) {
    for (std::size_t j = 0; j < out_w; ++j) {
      const double y = (double(i) + 0.5) * double(h) / double(out_h) - 0.5;
      const double x = (double(j) + 0.5) * double(w) / double(out_w) - 0.5;
      bilinear_sample(raw, y, x, px);
      heat.at({i, j}) = px[0];
    }
  }
  const double mx = *std::max_element(heat.values().begin(), heat.values().end());
  if (mx > 0.0) {
    for (auto& v : heat.values()) v = std::clamp(v / mx, 0.0, 1.0);
  } else {
    heat.fill(0.0);
  }
  return heat;
}

LabeledFeatures pooled_shared_features(const Model& model, const std::vector<SourceVideo>& videos,
                                       const EvalConfig& eval) {
  const auto& mc = model.config();
  std::vector<std::vector<std::vector<double>>> per_video(videos.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t v = 0; v < videos.size(); ++v) {
    for (const auto& clip : evaluation_clips(videos[v], eval.eval_speed, mc.clip_length,
                                             eval.clips_per_video, mc.input_height,
                                             mc.input_width)) {
      per_video[v].push_back(global_average_pool(model.shared_features(clip.frames)).values());
    }
  }
  LabeledFeatures out;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    for (auto& f : per_video[v]) out.add(std::move(f), videos[v].action_label, v, videos[v].video_id);
  }
  return out;
}

LinearClassifier train_cam_probe(const Model& model, const std::vector<SourceVideo>& videos,
                                 const EvalConfig& eval, std::size_t num_classes) {
  return LinearClassifier::train(pooled_shared_features(model, videos, eval), num_classes,
                                 {eval.probe_iterations, eval.probe_lr, eval.probe_l2});
}

CamMap cam_heatmap(const Model& model, const LinearClassifier& cam_probe, const VideoClip& clip,
                   std::size_t class_id) {
  if (class_id >= cam_probe.classes()) {
    throw std::invalid_argument("cam: class " + std::to_string(class_id) + " outside probe's " +
                                std::to_string(cam_probe.classes()) + " classes");
  }
  const Tensor features = model.shared_features(clip.frames);
  if (features.dim(0) != cam_probe.dim()) {
    throw std::invalid_argument("cam: probe expects " + std::to_string(cam_probe.dim()) +
                                " channels, feature map has " + std::to_string(features.dim(0)));
  }
  const auto w = cam_probe.raw_weights();
  CamMap cam;
  cam.heat = cam_from_features(
      features, std::span<const double>(w).subspan(class_id * cam_probe.dim(), cam_probe.dim()),
      clip.frames.dim(1), clip.frames.dim(2));
  cam.class_id = class_id;
  cam.video_id = clip.source_id;
  cam.frame_index = clip.frame_indices.empty() ? 0 : clip.frame_indices[middle_position(clip.length())];
  return cam;
}

std::vector<std::uint8_t> actor_mask(const SourceVideo& video, const VideoClip& clip) {
  if (!video.parsing_gt) {
    throw std::invalid_argument(video.video_id + ": actor mask needs parsing ground truth");
  }
  const std::size_t h = clip.frames.dim(1), w = clip.frames.dim(2);
  const std::size_t sh = video.height(), sw = video.width();
  std::vector<std::uint8_t> mask(h * w, 0);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const auto [y, x] = clip.geometry.to_source(i, j, h, w, sh, sw);
      const auto yi = std::size_t(std::clamp(std::floor(y + 0.5), 0.0, double(sh - 1)));
      const auto xi = std::size_t(std::clamp(std::floor(x + 0.5), 0.0, double(sw - 1)));
      for (std::size_t f : clip.frame_indices) {
        if (video.parsing_at(f, yi, xi) != 0) {
          mask[i * w + j] = 1;
          break;
        }
      }
    }
  }
  return mask;
}

CamFocus measure_cam_focus(const Model& model, const LinearClassifier& cam_probe,
                           const std::vector<SourceVideo>& videos, const EvalConfig& eval) {
  const auto& mc = model.config();
  CamFocus out;
  for (const auto& video : videos) {
    const auto clip = evaluation_clips(video, eval.eval_speed, mc.clip_length, 1, mc.input_height,
                                       mc.input_width)
                          .front();
    const auto cam = cam_heatmap(model, cam_probe, clip, std::size_t(video.action_label));
    const auto mask = actor_mask(video, clip);
    double actor = 0.0, background = 0.0;
    std::size_t na = 0, nb = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) {
        actor += cam.heat[i];
        ++na;
      } else {
        background += cam.heat[i];
        ++nb;
      }
    }
    if (na == 0 || nb == 0) continue;
    out.actor_heat.push_back(actor / double(na));
    out.background_heat.push_back(background / double(nb));
    ++out.clips;
    if (out.actor_heat.back() > out.background_heat.back()) ++out.focused;
  }
  return out;
}

namespace {

// Piecewise-linear "jet" colour map.
void colormap(double v, double rgb[3]) {
  v = std::clamp(v, 0.0, 1.0);
  rgb[0] = std::clamp(1.5 - std::abs(4.0 * v - 3.0), 0.0, 1.0);
  rgb[1] = std::clamp(1.5 - std::abs(4.0 * v - 2.0), 0.0, 1.0);
  rgb[2] = std::clamp(1.5 - std::abs(4.0 * v - 1.0), 0.0, 1.0);
}

}  // namespace

Image8 render_overlay(const Tensor& frame, const Tensor& heat, double alpha) {
  if (frame.rank() != 3 || frame.dim(2) != 3) throw std::invalid_argument("overlay: frame must be (H, W, 3)");
  if (heat.rank() != 2 || heat.dim(0) != frame.dim(0) || heat.dim(1) != frame.dim(1)) {
    throw std::invalid_argument("overlay: heatmap " + shape_to_string(heat.shape()) +
                                " does not match frame " + shape_to_string(frame.shape()));
  }
  Image8 img;
  img.height = frame.dim(0);
  img.width = frame.dim(1);
  img.channels = 3;
  img.pixels.resize(img.height * img.width * 3);
  for (std::size_t p = 0; p < img.height * img.width; ++p) {
    double rgb[3];
    colormap(heat[p], rgb);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double v = (1.0 - alpha) * frame[p * 3 + ch] + alpha * rgb[ch];
      img.pixels[p * 3 + ch] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
  }
  return img;
}

std::string overlay_filename(const std::string& video_id, std::size_t frame, std::size_t class_id) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "_%04zu_%zu.png", frame, class_id);
  return video_id + buf;
}

}  // namespace mtvssl
