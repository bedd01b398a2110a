#include "mtvssl/video.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mtvssl/rng.hpp"

namespace mtvssl {

std::uint8_t SourceVideo::parsing_at(std::size_t frame, std::size_t y, std::size_t x) const {
  if (!parsing_gt) throw std::logic_error("video " + video_id + " has no parsing ground truth");
  return (*parsing_gt)[(frame * height() + y) * width() + x];
}

void SourceVideo::validate() const {
  if (frames.rank() != 4 || frames.dim(3) != 3) {
    throw std::invalid_argument("video " + video_id + ": frames must be (F, H, W, 3), got " +
                                shape_to_string(frames.shape()));
  }
  if (frame_count() == 0) throw std::invalid_argument("video " + video_id + ": no frames");
  if (parsing_gt && parsing_gt->size() != frame_count() * height() * width()) {
    throw std::invalid_argument("video " + video_id + ": parsing maps do not match frames");
  }
}

std::pair<double, double> CropGeometry::to_source(std::size_t i, std::size_t j, std::size_t out_h,
                                                  std::size_t out_w, std::size_t target_h,
                                                  std::size_t target_w) const {
  const std::size_t jj = flip ? out_w - 1 - j : j;
  const double y = y0 + (double(i) + 0.5) * height / double(out_h);
  const double x = x0 + (double(jj) + 0.5) * width / double(out_w);
  // y, x are continuous edge coordinates in the source raster; rescale then
  // shift back to pixel-centre convention.
  return {y * double(target_h) / double(source_height) - 0.5,
          x * double(target_w) / double(source_width) - 0.5};
}

void AugmentConfig::validate() const {
  if (crop_height == 0 || crop_width == 0) throw std::invalid_argument("augment: empty crop size");
  if (!(scale_min > 0.0 && scale_min <= scale_max && scale_max <= 1.0)) {
    throw std::invalid_argument("augment: need 0 < scale_min <= scale_max <= 1");
  }
  if (!(ratio_min > 0.0 && ratio_min <= ratio_max)) {
    throw std::invalid_argument("augment: need 0 < ratio_min <= ratio_max");
  }
  if (flip_prob < 0.0 || flip_prob > 1.0) throw std::invalid_argument("augment: flip_prob");
  if (brightness < 0.0 || brightness >= 1.0 || contrast < 0.0 || contrast >= 1.0 ||
      saturation < 0.0 || saturation >= 1.0) {
    throw std::invalid_argument("augment: jitter strengths must lie in [0, 1)");
  }
}

VideoClip sample_clip(const SourceVideo& video, std::size_t speed, std::size_t length,
                      std::size_t start) {
  if (speed < 1) throw std::invalid_argument("sample_clip: speed must be >= 1");
  if (length < 1) throw std::invalid_argument("sample_clip: length must be >= 1");
  const std::size_t last = start + (length - 1) * speed;
  if (last >= video.frame_count()) {
    throw std::out_of_range("sample_clip: window ending at frame " + std::to_string(last) +
                            " exceeds video " + video.video_id + " with " +
                            std::to_string(video.frame_count()) + " frames");
  }
  const std::size_t h = video.height(), w = video.width();
  const std::size_t frame_size = h * w * 3;
  VideoClip clip;
  clip.frames = Tensor({length, h, w, 3});
  clip.source_id = video.video_id;
  clip.speed = speed;
  clip.geometry = CropGeometry::identity(h, w);
  for (std::size_t k = 0; k < length; ++k) {
    const std::size_t idx = start + k * speed;
    clip.frame_indices.push_back(idx);
    std::copy_n(video.frames.data() + idx * frame_size, frame_size,
                clip.frames.data() + k * frame_size);
  }
  return clip;
}

void bilinear_sample(const Tensor& image, double y, double x, std::span<double> out) {
  const std::size_t H = image.dim(0), W = image.dim(1), C = image.dim(2);
  y = std::clamp(y, 0.0, double(H - 1));
  x = std::clamp(x, 0.0, double(W - 1));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
  const double fy = y - double(y0), fx = x - double(x0);
  const double* p = image.data();
  for (std::size_t c = 0; c < C; ++c) {
    const double a = p[(y0 * W + x0) * C + c], b = p[(y0 * W + x1) * C + c];
    const double d = p[(y1 * W + x0) * C + c], e = p[(y1 * W + x1) * C + c];
    out[c] = (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * d + fx * e);
  }
}

namespace {

Tensor frame_view(const Tensor& frames, std::size_t k) {
  const std::size_t h = frames.dim(1), w = frames.dim(2), c = frames.dim(3);
  const std::size_t n = h * w * c;
  std::vector<double> data(frames.data() + k * n, frames.data() + (k + 1) * n);
  return Tensor({h, w, c}, std::move(data));
}

Tensor resample(const Tensor& frames, const CropGeometry& geo, std::size_t out_h,
                std::size_t out_w) {
  const std::size_t T = frames.dim(0), H = frames.dim(1), W = frames.dim(2);
  Tensor out({T, out_h, out_w, 3});
  for (std::size_t t = 0; t < T; ++t) {
    const Tensor src = frame_view(frames, t);
    for (std::size_t i = 0; i < out_h; ++i) {
      for (std::size_t j = 0; j < out_w; ++j) {
        const auto [y, x] = geo.to_source(i, j, out_h, out_w, H, W);
        bilinear_sample(src, y, x, std::span<double>(out.data() + ((t * out_h + i) * out_w + j) * 3, 3));
      }
    }
  }
  return out;
}

double gray(const double* px) { return 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]; }

}  // namespace

VideoClip resize_clip(const VideoClip& clip, std::size_t out_h, std::size_t out_w) {
  if (clip.length() == 0) throw std::invalid_argument("resize_clip: empty clip");
  VideoClip out = clip;
  const CropGeometry geo = CropGeometry::identity(clip.frames.dim(1), clip.frames.dim(2));
  out.frames = resample(clip.frames, geo, out_h, out_w);
  out.geometry = geo;
  return out;
}

VideoClip augment(const VideoClip& clip, const AugmentConfig& config, std::uint64_t seed) {
  if (clip.length() == 0 || clip.frames.empty()) throw std::invalid_argument("augment: empty clip");
  Rng rng(seed);
  const std::size_t H = clip.frames.dim(1), W = clip.frames.dim(2);

  const double area = double(H * W) * rng.uniform(config.scale_min, config.scale_max);
  const double log_ratio = rng.uniform(std::log(config.ratio_min), std::log(config.ratio_max));
  const double ratio = std::exp(log_ratio);
  const double ch = std::min(double(H), std::sqrt(area / ratio));
  const double cw = std::min(double(W), std::sqrt(area * ratio));
  CropGeometry geo;
  geo.height = ch;
  geo.width = cw;
  geo.y0 = rng.uniform() * (double(H) - ch);
  geo.x0 = rng.uniform() * (double(W) - cw);
  geo.flip = rng.bernoulli(config.flip_prob);
  geo.source_height = H;
  geo.source_width = W;

  const double brightness = rng.uniform(1.0 - config.brightness, 1.0 + config.brightness);
  const double contrast = rng.uniform(1.0 - config.contrast, 1.0 + config.contrast);
  const double saturation = rng.uniform(1.0 - config.saturation, 1.0 + config.saturation);

  VideoClip out = clip;
  out.geometry = geo;
  out.frames = resample(clip.frames, geo, config.crop_height, config.crop_width);

  double* px = out.frames.data();
  const std::size_t pixels = out.frames.size() / 3;
  if (brightness != 1.0) {
    for (std::size_t i = 0; i < out.frames.size(); ++i) px[i] *= brightness;
  }
  if (contrast != 1.0) {
    double mean = 0.0;
    for (std::size_t p = 0; p < pixels; ++p) mean += gray(px + 3 * p);
    mean /= double(pixels);
    for (std::size_t i = 0; i < out.frames.size(); ++i) px[i] = (px[i] - mean) * contrast + mean;
  }
  if (saturation != 1.0) {
    for (std::size_t p = 0; p < pixels; ++p) {
      const double g = gray(px + 3 * p);
      for (int c = 0; c < 3; ++c) px[3 * p + c] = g + (px[3 * p + c] - g) * saturation;
    }
  }
  for (std::size_t i = 0; i < out.frames.size(); ++i) px[i] = std::clamp(px[i], 0.0, 1.0);
  return out;
}

std::size_t middle_position(std::size_t length) {
  if (length == 0) throw std::invalid_argument("middle_frame: empty clip");
  return length / 2;
}

Frame middle_frame(const VideoClip& clip) {
  const std::size_t pos = middle_position(clip.length());
  Frame f;
  f.pixels = frame_view(clip.frames, pos);
  f.clip_source = clip.source_id;
  f.frame_index = clip.frame_indices[pos];
  f.geometry = clip.geometry;
  return f;
}

namespace {

std::size_t max_start(const SourceVideo& video, std::size_t speed, std::size_t length) {
  const std::size_t span = (length - 1) * speed + 1;
  if (span > video.frame_count()) {
    throw std::invalid_argument("make_training_sample: video " + video.video_id + " has " +
                                std::to_string(video.frame_count()) + " frames, speed " +
                                std::to_string(speed) + " x length " + std::to_string(length) +
                                " needs " + std::to_string(span));
  }
  return video.frame_count() - span;
}

}  // namespace

TrainingSample make_training_sample(const SourceVideo& video, const SamplingConfig& config,
                                    std::uint64_t seed) {
  std::vector<std::size_t> speeds = config.speeds;
  std::sort(speeds.begin(), speeds.end());
  speeds.erase(std::unique(speeds.begin(), speeds.end()), speeds.end());
  if (speeds.size() < 2) throw std::invalid_argument("make_training_sample: need >= 2 distinct speeds");
  if (speeds.front() < 1) throw std::invalid_argument("make_training_sample: speeds must be >= 1");
  const std::size_t T = config.clip_length;
  for (std::size_t s : speeds) max_start(video, s, T);

  Rng rng(seed);
  const std::size_t anchor_speed = speeds[rng.uniform_int(0, std::int64_t(speeds.size()) - 1)];
  std::vector<std::size_t> others;
  for (std::size_t s : speeds) {
    if (s != anchor_speed) others.push_back(s);
  }
  const std::size_t negative_speed = others[rng.uniform_int(0, std::int64_t(others.size()) - 1)];

  const std::size_t anchor_max = max_start(video, anchor_speed, T);
  const std::size_t anchor_start = rng.uniform_int(0, std::int64_t(anchor_max));
  std::size_t positive_start = anchor_start;
  if (anchor_max > 0) {
    // Uniform over the other valid starts.
    positive_start = rng.uniform_int(0, std::int64_t(anchor_max) - 1);
    if (positive_start >= anchor_start) ++positive_start;
  }
  const std::size_t negative_start =
      rng.uniform_int(0, std::int64_t(max_start(video, negative_speed, T)));
  const std::size_t appearance_start = rng.uniform_int(0, std::int64_t(anchor_max));

  const std::uint64_t aug_base = rng.next_u64();
  const VideoClip raw_anchor = sample_clip(video, anchor_speed, T, anchor_start);

  // The three motion clips share one augmentation draw so that they differ
  // only in start offset and speed; the appearance positive gets its own.
  const std::uint64_t motion_aug = derive_seed(aug_base, 0);
  TrainingSample s;
  s.anchor = augment(raw_anchor, config.augment, motion_aug);
  s.speed_positive =
      augment(sample_clip(video, anchor_speed, T, positive_start), config.augment, motion_aug);
  s.speed_negative =
      augment(sample_clip(video, negative_speed, T, negative_start), config.augment, motion_aug);
  s.appearance_positive = augment(sample_clip(video, anchor_speed, T, appearance_start),
                                  config.augment, derive_seed(aug_base, 1));
  // Teacher sees the un-jittered source frame; the crop geometry travels with it.
  s.teacher_frame = middle_frame(raw_anchor);
  s.teacher_frame.geometry = s.anchor.geometry;
  return s;
}

}  // namespace mtvssl
