#include "lorat/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "lorat/errors.hpp"

namespace lorat {

namespace {

constexpr std::array<std::array<int, 3>, 6> kPalette{{
    {235, 30, 30}, {30, 220, 40}, {40, 60, 235}, {235, 220, 30}, {220, 40, 220}, {30, 220, 220}}};
// Background channels stay within [kBgLow, kBgHigh]; every palette color has a
// channel outside that range, so no background pixel can match the target.
constexpr int kBgLow = 40;
constexpr int kBgHigh = 190;

std::array<int, 2> offset_at(const SyntheticConfig& c, int t) {
  switch (c.motion) {
    case Motion::Static:
      return {0, 0};
    case Motion::Linear:
      return {static_cast<int>(std::lround(c.velocity_x * t)), static_cast<int>(std::lround(c.velocity_y * t))};
    case Motion::Sinusoidal: {
      const double phase = 2.0 * std::numbers::pi * t / c.period;
      return {static_cast<int>(std::lround(c.amplitude * std::sin(phase))),
              static_cast<int>(std::lround(0.5 * c.amplitude * (1.0 - std::cos(phase))))};
    }
  }
  return {0, 0};
}

}  // namespace

std::string_view to_string(Motion m) {
  switch (m) {
    case Motion::Static:
      return "static";
    case Motion::Linear:
      return "linear";
    case Motion::Sinusoidal:
      return "sinusoidal";
  }
  return "static";
}

Motion parse_motion(std::string_view s) {
  if (s == "static") return Motion::Static;
  if (s == "linear") return Motion::Linear;
  if (s == "sinusoidal") return Motion::Sinusoidal;
  throw ParameterError("unknown motion '" + std::string(s) + "'");
}

std::array<int, 3> target_color(const SyntheticConfig& config) {
  return kPalette[config.seed % kPalette.size()];
}

Video generate_synthetic(const SyntheticConfig& c) {
  if (c.frames < 1 || c.image_width < 1 || c.image_height < 1) throw ParameterError("synthetic: empty video");
  if (c.target_width < 1 || c.target_height < 1) throw ParameterError("synthetic: target must be at least 1x1");
  if (c.motion == Motion::Sinusoidal && !(c.period > 0.0)) throw ParameterError("synthetic: period must be positive");

  int min_dx = 0, max_dx = 0, min_dy = 0, max_dy = 0;
  std::vector<std::array<int, 2>> offsets;
  for (int t = 0; t < c.frames; ++t) {
    const auto o = offset_at(c, t);
    offsets.push_back(o);
    min_dx = std::min(min_dx, o[0]);
    max_dx = std::max(max_dx, o[0]);
    min_dy = std::min(min_dy, o[1]);
    max_dy = std::max(max_dy, o[1]);
  }
  // Feasible top-left range for frame 0.
  const int lo_x = -min_dx, hi_x = c.image_width - c.target_width - max_dx;
  const int lo_y = -min_dy, hi_y = c.image_height - c.target_height - max_dy;
  if (lo_x > hi_x || lo_y > hi_y) throw ParameterError("synthetic: target leaves the image");

  Rng rng(c.seed);
  int x0, y0;
  if (c.start) {
    x0 = (*c.start)[0];
    y0 = (*c.start)[1];
    if (x0 < lo_x || x0 > hi_x || y0 < lo_y || y0 > hi_y) throw ParameterError("synthetic: target leaves the image");
  } else {
    x0 = std::uniform_int_distribution<int>(lo_x, hi_x)(rng);
    y0 = std::uniform_int_distribution<int>(lo_y, hi_y)(rng);
  }

  const int w = c.image_width, h = c.image_height;
  const auto plane = static_cast<std::size_t>(w * h);
  // Blocky low-frequency texture plus a per-channel tint, fixed per video.
  constexpr int kBlock = 8;
  const int bw = (w + kBlock - 1) / kBlock, bh = (h + kBlock - 1) / kBlock;
  std::uniform_int_distribution<int> block_level(70, 160);
  std::uniform_int_distribution<int> tint(-12, 12);
  std::vector<int> blocks(static_cast<std::size_t>(bw * bh));
  for (auto& b : blocks) b = block_level(rng);
  const std::array<int, 3> tints{tint(rng), tint(rng), tint(rng)};
  const auto color = target_color(c);

  Video video;
  video.record.video_id = c.video_id;
  std::uniform_int_distribution<int> noise(-18, 18);
  for (int t = 0; t < c.frames; ++t) {
    const BBox box{static_cast<double>(x0 + offsets[static_cast<std::size_t>(t)][0]),
                   static_cast<double>(y0 + offsets[static_cast<std::size_t>(t)][1]),
                   static_cast<double>(c.target_width), static_cast<double>(c.target_height)};
    video.record.gt_boxes.push_back(box);
    std::vector<float> px(3 * plane);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const bool inside = x >= box.x && x < box.right() && y >= box.y && y < box.bottom();
        const int base = blocks[static_cast<std::size_t>((y / kBlock) * bw + x / kBlock)];
        for (std::size_t ch = 0; ch < 3; ++ch) {
          const int v = inside ? color[ch] : std::clamp(base + tints[ch] + noise(rng), kBgLow, kBgHigh);
          px[ch * plane + static_cast<std::size_t>(y * w + x)] = static_cast<float>(v) / 255.0f;
        }
      }
    video.frames.emplace_back(Shape{3, h, w}, std::move(px));
  }
  return video;
}

std::vector<Video> synthetic_dataset(int count, int frames, int image_size, const std::vector<Motion>& motions,
                                     std::uint64_t seed) {
  if (motions.empty()) throw ParameterError("synthetic_dataset: no motion kinds");
  Rng rng(seed);
  std::uniform_int_distribution<int> size(image_size / 8, image_size / 5);
  std::uniform_real_distribution<double> speed(-2.0, 2.0);
  std::uniform_real_distribution<double> amp(6.0, image_size / 8.0);
  std::uniform_real_distribution<double> period(16.0, 40.0);
  std::vector<Video> out;
  for (int i = 0; i < count; ++i) {
    SyntheticConfig c;
    c.video_id = "synth_" + std::to_string(i);
    c.frames = frames;
    c.image_width = c.image_height = image_size;
    c.motion = motions[static_cast<std::size_t>(i) % motions.size()];
    c.target_width = size(rng);
    c.target_height = size(rng);
    c.seed = rng();
    c.velocity_x = speed(rng);
    c.velocity_y = speed(rng);
    c.amplitude = amp(rng);
    c.period = period(rng);
    // Shrink the motion until the trajectory fits.
    for (int attempt = 0;; ++attempt) {
      try {
        out.push_back(generate_synthetic(c));
        break;
      } catch (const ParameterError&) {
        if (attempt > 16) throw;
        c.velocity_x *= 0.7;
        c.velocity_y *= 0.7;
        c.amplitude *= 0.7;
      }
    }
  }
  return out;
}

}  // namespace lorat
