#pragma once

// Procedural tracking videos: a solid, saturated rectangle moving over a
// textured gray background. Boxes are integer-aligned so ground truth is exact.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lorat/dataset.hpp"

namespace lorat {

enum class Motion { Static, Linear, Sinusoidal };

std::string_view to_string(Motion m);
Motion parse_motion(std::string_view s);

struct SyntheticConfig {
  std::string video_id = "synthetic";
  int frames = 30;
  int image_width = 128;
  int image_height = 128;
  Motion motion = Motion::Linear;
  int target_width = 24;
  int target_height = 24;
  double velocity_x = 2.0;  // linear, px per frame
  double velocity_y = 1.0;
  double amplitude = 16.0;  // sinusoidal, px
  double period = 24.0;     // sinusoidal, frames
  std::optional<std::array<int, 2>> start;  // top-left at frame 0; random feasible when absent
  std::uint64_t seed = 0;
};

/// Frames are [3×H×W] with 8-bit-representable values. Throws ParameterError
/// when the target cannot stay inside the image for the whole trajectory.
Video generate_synthetic(const SyntheticConfig& config);

/// The 8-bit RGB color used for the target of `config`.
std::array<int, 3> target_color(const SyntheticConfig& config);

/// `count` videos cycling through `motions`, with per-video sizes, speeds and colors drawn from `seed`.
std::vector<Video> synthetic_dataset(int count, int frames, int image_size, const std::vector<Motion>& motions,
                                     std::uint64_t seed);

}  // namespace lorat
