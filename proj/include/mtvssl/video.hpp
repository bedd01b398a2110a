#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtvssl/tensor.hpp"

namespace mtvssl {

// A decoded source video. frames is (F, H, W, 3) with values in [0, 1];
// parsing_gt, when present, holds F*H*W class indices in row-major order.
struct SourceVideo {
  std::string video_id;
  int action_label = 0;
  Tensor frames;
  std::optional<std::vector<std::uint8_t>> parsing_gt;

  std::size_t frame_count() const { return frames.rank() ? frames.dim(0) : 0; }
  std::size_t height() const { return frames.dim(1); }
  std::size_t width() const { return frames.dim(2); }
  std::uint8_t parsing_at(std::size_t frame, std::size_t y, std::size_t x) const;
  // Throws std::invalid_argument when any invariant is broken.
  void validate() const;
};

// Region of the source frame (in source pixel units) that an augmented clip
// was resampled from. x is measured before the optional horizontal flip.
struct CropGeometry {
  double y0 = 0.0;
  double x0 = 0.0;
  double height = 0.0;
  double width = 0.0;
  bool flip = false;
  std::size_t source_height = 0;
  std::size_t source_width = 0;

  static CropGeometry identity(std::size_t h, std::size_t w) {
    return {0.0, 0.0, double(h), double(w), false, h, w};
  }
  // Maps output pixel centre (i, j) of an out_h x out_w grid to continuous
  // source coordinates, scaled to a source raster of target_h x target_w.
  std::pair<double, double> to_source(std::size_t i, std::size_t j, std::size_t out_h,
                                      std::size_t out_w, std::size_t target_h,
                                      std::size_t target_w) const;
};

struct VideoClip {
  Tensor frames;  // (T, H_c, W_c, 3)
  std::string source_id;
  std::vector<std::size_t> frame_indices;
  std::size_t speed = 1;
  CropGeometry geometry;

  std::size_t length() const { return frame_indices.size(); }
};

struct Frame {
  Tensor pixels;  // (H, W, 3)
  std::string clip_source;
  std::size_t frame_index = 0;
  // Crop+flip of the clip this frame supervises; teachers map their output
  // into these coordinates.
  CropGeometry geometry;
};

struct TrainingSample {
  VideoClip anchor;
  VideoClip speed_positive;
  VideoClip speed_negative;
  VideoClip appearance_positive;
  Frame teacher_frame;
  std::size_t video_index = 0;
};

struct AugmentConfig {
  std::size_t crop_height = 32;
  std::size_t crop_width = 32;
  double scale_min = 0.6;
  double scale_max = 1.0;
  double ratio_min = 0.75;
  double ratio_max = 4.0 / 3.0;
  double flip_prob = 0.5;
  double brightness = 0.3;
  double contrast = 0.3;
  double saturation = 0.3;

  void validate() const;
};

VideoClip sample_clip(const SourceVideo& video, std::size_t speed, std::size_t length,
                      std::size_t start);

// Random resized crop + flip + colour jitter, one geometric transform shared by
// all frames. Deterministic in (clip, seed).
VideoClip augment(const VideoClip& clip, const AugmentConfig& config, std::uint64_t seed);

// Resamples the full clip to the configured crop size without randomness.
VideoClip resize_clip(const VideoClip& clip, std::size_t out_h, std::size_t out_w);

// Frame at position floor(T/2), taken from the clip tensor.
Frame middle_frame(const VideoClip& clip);
std::size_t middle_position(std::size_t length);

struct SamplingConfig {
  std::vector<std::size_t> speeds{1, 2, 4};
  std::size_t clip_length = 8;
  AugmentConfig augment;
};

TrainingSample make_training_sample(const SourceVideo& video, const SamplingConfig& config,
                                    std::uint64_t seed);

// Bilinear sample of an (H, W, C) raster at continuous coords with edge clamping.
void bilinear_sample(const Tensor& image, double y, double x, std::span<double> out);

}  // namespace mtvssl
