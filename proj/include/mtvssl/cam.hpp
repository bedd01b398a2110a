#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mtvssl/config.hpp"
#include "mtvssl/image_io.hpp"
#include "mtvssl/model.hpp"
#include "mtvssl/probe.hpp"
#include "mtvssl/video.hpp"

namespace mtvssl {

struct CamMap {
  Tensor heat;  // (H_c, W_c), values in [0, 1]
  std::size_t class_id = 0;
  std::string video_id;
  std::size_t frame_index = 0;  // source frame the overlay is drawn on
};

// Class activation map from a (C, T, h, w) feature map and per-channel class
// weights: weighted channel sum, mean over time, ReLU, bilinear upsampling to
// (out_h, out_w), then division by the maximum (all zeros if nothing is positive).
Tensor cam_from_features(const Tensor& features, std::span<const double> class_weights,
                         std::size_t out_h, std::size_t out_w);

// Linear classifier on globally pooled shared-encoder features; the
// global-pool + linear structure is what makes the CAM weights meaningful.
LinearClassifier train_cam_probe(const Model& model, const std::vector<SourceVideo>& videos,
                                 const EvalConfig& eval, std::size_t num_classes);

LabeledFeatures pooled_shared_features(const Model& model, const std::vector<SourceVideo>& videos,
                                       const EvalConfig& eval);

CamMap cam_heatmap(const Model& model, const LinearClassifier& cam_probe, const VideoClip& clip,
                   std::size_t class_id);

// Pixels of the clip frame grid where any frame of the clip shows a non-background part.
std::vector<std::uint8_t> actor_mask(const SourceVideo& video, const VideoClip& clip);

struct CamFocus {
  std::size_t clips = 0;
  std::size_t focused = 0;  // clips whose actor heat exceeds background heat
  std::vector<double> actor_heat, background_heat;
  double fraction() const { return clips ? double(focused) / double(clips) : 0.0; }
};

// One evaluation clip per video, CAM for the video's true class.
CamFocus measure_cam_focus(const Model& model, const LinearClassifier& cam_probe,
                           const std::vector<SourceVideo>& videos, const EvalConfig& eval);

// Heatmap colour-mapped and alpha-blended over the frame (H, W, 3 in [0, 1]).
Image8 render_overlay(const Tensor& frame, const Tensor& heat, double alpha);

// "{video_id}_{frame:04}_{class}.png"
std::string overlay_filename(const std::string& video_id, std::size_t frame, std::size_t class_id);

}  // namespace mtvssl
