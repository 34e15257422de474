#pragma once

// Siamese tracking loop: square context crops, the crop↔image affine, and a
// tracker that builds its template block once and then steps frame by frame.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lorat/bbox.hpp"
#include "lorat/embedding.hpp"
#include "lorat/image.hpp"
#include "lorat/model.hpp"

namespace lorat {

/// Axis-aligned square (center, side) resampled to out_size². Crop pixel u maps
/// to image coordinate x0 + u / scale.
struct CropSpec {
  double cx = 0.0;
  double cy = 0.0;
  double side = 1.0;
  int out_size = 1;

  double scale() const { return out_size / side; }
  double x0() const { return cx - 0.5 * side; }
  double y0() const { return cy - 0.5 * side; }
};

/// Bilinear resampling; pixels outside the image read as the per-channel image mean.
Tensor crop_square(const Tensor& image, const CropSpec& spec);

/// Centered on the box, side = factor · sqrt(w·h).
CropSpec template_spec(const BBox& init_box, double context_factor, int out_size);
/// As template_spec; a box without positive area falls back to `last_valid`.
CropSpec search_spec(const BBox& prev_box, double search_factor, int out_size,
                     const std::optional<BBox>& last_valid = std::nullopt);

BBox image_to_crop(const BBox& box, const CropSpec& spec);
/// Inverse affine. With `bounds`, the result is clamped to the image and w, h are floored at 1e-3.
BBox box_to_image(const BBox& box_in_crop, const CropSpec& spec,
                  std::optional<ImageSize> bounds = std::nullopt);
BBox clamp_box(const BBox& box, double width, double height);

struct TrackerState;

/// Post-processing hook applied to the selected box in search-crop coordinates.
using Refiner = std::function<BBox(const BBox& box, float score, const TrackerState& state)>;

struct PostprocessResult {
  BBox box;
  bool warning = false;  // refiner failed, identity used
};

/// Identity when `refiner` is empty; a throwing refiner or a non-finite result also falls back to identity.
PostprocessResult postprocess(const BBox& box, float score, const TrackerState& state, const Refiner& refiner);

/// Refiner that clamps crop-space boxes to the frame's extent; in-bounds boxes pass through bitwise.
Refiner clamp_to_image_refiner();

struct TrackerState {
  std::shared_ptr<const TrackerModel> model;
  Tensor template_tokens;  // computed once at init
  TokenTypeIds ids;
  BBox prev;
  BBox last_valid;
  ImageSize image;
  CropSpec last_search;
  int frame = 0;
};

struct StepResult {
  BBox box;
  float score = 0.0f;
  bool nonfinite = false;        // frame skipped, prev kept
  bool refiner_warning = false;
};

/// The model must not carry unmerged adapters.
TrackerState track_init(std::shared_ptr<const TrackerModel> model, const Tensor& first_frame,
                        const BBox& init_box);
StepResult track_step(TrackerState& state, const Tensor& frame, const Refiner& refiner = {});

/// Per-frame boxes for a whole video; element 0 is the init box.
struct TrackRun {
  std::vector<BBox> boxes;
  int flagged_frames = 0;
  int refiner_warnings = 0;
};
TrackRun track_video(std::shared_ptr<const TrackerModel> model, const std::vector<Tensor>& frames,
                     const BBox& init_box, const Refiner& refiner = {});

}  // namespace lorat
