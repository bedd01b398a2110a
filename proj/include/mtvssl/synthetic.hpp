#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mtvssl/video.hpp"

namespace mtvssl {

// Synthetic stand-in for a pre-training corpus: a stick-figure actor whose
// coloured parts map one-to-one to parsing classes, moving with a per-action
// motion pattern over a static textured background.
struct SceneConfig {
  std::size_t num_actions = 8;
  std::size_t num_part_classes = 4;  // includes background class 0
  std::size_t frame_count = 32;
  std::size_t height = 32;
  std::size_t width = 32;

  // Actor geometry, as fractions of the frame height.
  double torso_half_height = 0.16;
  double torso_half_width = 0.09;
  double head_radius = 0.075;
  double limb_length = 0.2;
  double limb_thickness = 0.035;

  // Actions are four motion kinds (drift, bob, wave, pulse), each at a slow and
  // a fast tempo. Translation is in frame-heights per frame, angles in radians,
  // scale as a fraction of the body size, periods in frames at the slow tempo.
  // Each video draws its own drift direction and starting phase.
  double translate_per_frame = 0.03;
  double oscillation_amplitude = 0.15;
  double oscillation_period = 12.0;
  double limb_swing = 0.9;
  double scale_amplitude = 0.2;
  double fast_tempo = 2.0;  // tempo multiplier of the fast variant
  double background_noise = 0.0;
  // 0 gives every video the same background texture, 1 the full per-video spread.
  double background_variation = 0.25;

  void validate() const;
};

SourceVideo generate_synthetic_video(const SceneConfig& scene, std::size_t action,
                                     std::uint64_t seed);

// Videos for actions 0..num_actions-1, `per_action` each, ids "<prefix>_a<action>_<k>".
// Item seeds are derived from (seed, item index) so parallel generation is
// order-independent.
std::vector<SourceVideo> generate_synthetic_corpus(const SceneConfig& scene, std::size_t per_action,
                                                   std::uint64_t seed, const std::string& prefix);

// RGB colour used for a parsing class (class 0 is never drawn with it).
std::array<double, 3> part_color(std::size_t part_class, std::size_t num_classes);

std::string action_name(std::size_t action);

}  // namespace mtvssl
