#include "mtvssl/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mtvssl/rng.hpp"

namespace mtvssl {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Pose {
  double dx = 0.0;  // pixels
  double dy = 0.0;
  double scale = 1.0;
  double arm_offset = 0.0;  // radians, raises both arms
  double leg_offset = 0.0;  // radians, alternating legs
};

// `phase` in [0, 1) shifts the video along its cycle and `direction` (+1 or -1)
// orients the drift, so neither a single frame nor the drift sign identifies the action.
Pose pose_at(const SceneConfig& s, std::size_t action, double t, double phase, double direction) {
  const double gain = 1.0 + double(action / 8);
  const double tempo = (action % 2 == 1 ? s.fast_tempo : 1.0) * gain;
  const double h = double(s.height);
  const double cycles = tempo * t / s.oscillation_period + phase;
  const double wave = std::sin(kTwoPi * cycles);
  Pose p;
  switch ((action % 8) / 2) {
    case 0: p.dx = direction * tempo * s.translate_per_frame * h * t; break;
    case 1: p.dy = gain * s.oscillation_amplitude * h * wave; break;
    case 2: p.arm_offset = gain * s.limb_swing * wave; break;
    default: p.scale = std::max(0.3, 1.0 + gain * s.scale_amplitude * wave); break;
  }
  return p;
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double u = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  u = std::clamp(u, 0.0, 1.0);
  const double qx = ax + u * vx - px, qy = ay + u * vy - py;
  return std::sqrt(qx * qx + qy * qy);
}

struct Actor {
  double cx, cy, body_scale;
  std::vector<double> limb_jitter;  // per-limb base-angle jitter
};

struct Background {
  std::array<double, 3> base;
  double fx, fy, phase_x, phase_y, amplitude;
};

std::size_t part_class_of(std::size_t part, std::size_t num_classes) {
  return std::min(part + 1, num_classes - 1);
}

}  // namespace

void SceneConfig::validate() const {
  if (num_actions < 2) throw std::invalid_argument("scene: num_actions must be >= 2");
  if (num_part_classes < 2) throw std::invalid_argument("scene: num_part_classes must be >= 2");
  if (num_part_classes > 256) throw std::invalid_argument("scene: num_part_classes must be <= 256");
  if (frame_count == 0) throw std::invalid_argument("scene: frame_count must be positive");
  if (!(oscillation_period > 0.0) || !(fast_tempo > 0.0)) {
    throw std::invalid_argument("scene: oscillation_period and fast_tempo must be positive");
  }
  if (!(background_variation >= 0.0 && background_variation <= 1.0)) {
    throw std::invalid_argument("scene: background_variation must lie in [0, 1]");
  }
  if (height < 16 || width < 16) {
    throw std::invalid_argument("scene: resolution " + std::to_string(height) + "x" +
                                std::to_string(width) + " too small to place the actor (min 16x16)");
  }
}

std::array<double, 3> part_color(std::size_t part_class, std::size_t num_classes) {
  static constexpr std::array<std::array<double, 3>, 3> fixed{{
      {0.85, 0.20, 0.20},  // torso
      {0.95, 0.80, 0.60},  // head
      {0.20, 0.35, 0.90},  // limbs
  }};
  if (part_class >= 1 && part_class <= 3) return fixed[part_class - 1];
  // Remaining classes: hues spread around the wheel at full saturation.
  const double hue = std::fmod(double(part_class - 4) / double(std::max<std::size_t>(1, num_classes - 4)) +
                                   0.1, 1.0) * 6.0;
  const double f = hue - std::floor(hue);
  const double v = 0.9, p = 0.15, q = v - (v - p) * f, tt = p + (v - p) * f;
  switch (static_cast<int>(hue) % 6) {
    case 0: return {v, tt, p};
    case 1: return {q, v, p};
    case 2: return {p, v, tt};
    case 3: return {p, q, v};
    case 4: return {tt, p, v};
    default: return {v, p, q};
  }
}

std::string action_name(std::size_t action) {
  static constexpr std::array<const char*, 8> names{"drift_slow", "drift_fast", "bob_slow",
                                                    "bob_fast",   "wave_slow",  "wave_fast",
                                                    "pulse_slow", "pulse_fast"};
  std::string name = names[action % 8];
  if (action >= 8) name += "_x" + std::to_string(1 + action / 8);
  return name;
}

SourceVideo generate_synthetic_video(const SceneConfig& scene, std::size_t action,
                                     std::uint64_t seed) {
  scene.validate();
  if (action >= scene.num_actions) {
    throw std::invalid_argument("generate_synthetic_video: action " + std::to_string(action) +
                                " out of range [0, " + std::to_string(scene.num_actions) + ")");
  }
  const std::size_t F = scene.frame_count, H = scene.height, W = scene.width;
  const std::size_t C = scene.num_part_classes;
  const std::size_t num_limbs = std::max<std::size_t>(4, C >= 3 ? C - 3 : 0);

  // Placement, motion phase and background depend on the seed only, never on the action.
  Rng rng(seed);
  Actor actor;
  // The horizontal axis wraps around, so any start column is valid.
  actor.cx = rng.uniform(0.0, 1.0) * double(W);
  actor.cy = rng.uniform(0.45, 0.55) * double(H);
  actor.body_scale = rng.uniform(0.9, 1.1);
  for (std::size_t l = 0; l < num_limbs; ++l) actor.limb_jitter.push_back(rng.uniform(-0.15, 0.15));
  const double phase = rng.uniform();
  const double direction = rng.bernoulli(0.5) ? 1.0 : -1.0;
  // Background: one texture family shared by the corpus, perturbed per video
  // by `background_variation`.
  Background bg;
  const double var = scene.background_variation;
  const double tint = var * rng.uniform(-0.08, 0.08);
  bg.base = {0.45 + tint + var * rng.uniform(-0.04, 0.04), 0.47 + tint + var * rng.uniform(-0.04, 0.04),
             0.43 + tint + var * rng.uniform(-0.04, 0.04)};
  bg.fx = 0.22 + var * rng.uniform(-0.12, 0.12);
  bg.fy = 0.22 + var * rng.uniform(-0.12, 0.12);
  bg.phase_x = var * rng.uniform(0.0, kTwoPi);
  bg.phase_y = var * rng.uniform(0.0, kTwoPi);
  bg.amplitude = 0.085 + var * rng.uniform(-0.035, 0.035);
  const std::uint64_t noise_seed = rng.next_u64();

  SourceVideo video;
  video.video_id = "synthetic_a" + std::to_string(action) + "_s" + std::to_string(seed);
  video.action_label = static_cast<int>(action);
  video.frames = Tensor({F, H, W, 3});
  video.parsing_gt = std::vector<std::uint8_t>(F * H * W, 0);

  std::vector<std::array<double, 3>> colors(C);
  for (std::size_t c = 1; c < C; ++c) colors[c] = part_color(c, C);

  for (std::size_t f = 0; f < F; ++f) {
    const Pose pose = pose_at(scene, action, double(f), phase, direction);
    const double S = actor.body_scale * pose.scale * double(H);
    // Parts are laid out around a centre at x = 0; pixels are wrapped into
    // [-W/2, W/2) relative to the actor column.
    const double cx = 0.0, cy = actor.cy + pose.dy;
    const double column = actor.cx + pose.dx;
    const double thh = scene.torso_half_height * S, thw = scene.torso_half_width * S;
    const double head_r = scene.head_radius * S;
    const double head_cx = cx, head_cy = cy - thh - 0.9 * head_r;
    const double limb_len = scene.limb_length * S, limb_r = scene.limb_thickness * S;

    // Limb segments: two arms, two legs, then extra limbs radiating from the torso.
    struct Segment {
      double ax, ay, bx, by;
    };
    std::vector<Segment> limbs;
    for (std::size_t l = 0; l < num_limbs; ++l) {
      double ax = cx, ay = cy, angle = 0.0;  // angle measured from straight down
      switch (l) {
        case 0: ax = cx - thw; ay = cy - 0.7 * thh; angle = -(0.6 + pose.arm_offset); break;
        case 1: ax = cx + thw; ay = cy - 0.7 * thh; angle = 0.6 + pose.arm_offset; break;
        case 2: ax = cx - 0.5 * thw; ay = cy + thh; angle = -0.25 + pose.leg_offset; break;
        case 3: ax = cx + 0.5 * thw; ay = cy + thh; angle = 0.25 - pose.leg_offset; break;
        default: angle = kTwoPi * double(l - 4) / double(num_limbs - 4) + 0.5; break;
      }
      angle += actor.limb_jitter[l];
      const double len = l < 4 ? limb_len : 1.1 * (thh + limb_len * 0.5);
      limbs.push_back({ax, ay, ax + len * std::sin(angle), ay + len * std::cos(angle)});
    }

    Rng noise(derive_seed(noise_seed, f));
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        double px = std::fmod(double(x) + 0.5 - column, double(W));
        if (px < -0.5 * double(W)) px += double(W);
        if (px >= 0.5 * double(W)) px -= double(W);
        const double py = double(y) + 0.5;
        std::size_t cls = 0;
        for (std::size_t l = 0; l < limbs.size(); ++l) {
          if (segment_distance(px, py, limbs[l].ax, limbs[l].ay, limbs[l].bx, limbs[l].by) <= limb_r) {
            cls = part_class_of(2 + l, C);
          }
        }
        if (std::abs(px - cx) <= thw && std::abs(py - cy) <= thh) cls = part_class_of(0, C);
        if (std::hypot(px - head_cx, py - head_cy) <= head_r) cls = part_class_of(1, C);

        double* out = video.frames.data() + ((f * H + y) * W + x) * 3;
        const double n = scene.background_noise * noise.normal();
        if (cls == 0) {
          const double pattern = bg.amplitude * std::sin(bg.fx * double(x) + bg.phase_x) *
                                 std::sin(bg.fy * double(y) + bg.phase_y);
          for (int c = 0; c < 3; ++c) out[c] = std::clamp(bg.base[c] + pattern + n, 0.0, 1.0);
        } else {
          for (int c = 0; c < 3; ++c) out[c] = std::clamp(colors[cls][c] + n, 0.0, 1.0);
        }
        (*video.parsing_gt)[(f * H + y) * W + x] = static_cast<std::uint8_t>(cls);
      }
    }
  }
  return video;
}

std::vector<SourceVideo> generate_synthetic_corpus(const SceneConfig& scene, std::size_t per_action,
                                                   std::uint64_t seed, const std::string& prefix) {
  scene.validate();
  const std::size_t total = scene.num_actions * per_action;
  std::vector<SourceVideo> videos(total);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(total); ++i) {
    const std::size_t action = std::size_t(i) / per_action;
    const std::size_t k = std::size_t(i) % per_action;
    SourceVideo v = generate_synthetic_video(scene, action, derive_seed(seed, std::uint64_t(i)));
    v.video_id = prefix + "_a" + std::to_string(action) + "_" + std::to_string(k);
    videos[std::size_t(i)] = std::move(v);
  }
  return videos;
}

}  // namespace mtvssl
