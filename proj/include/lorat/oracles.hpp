#pragma once

// Straightforward reference computations used only for verification. They
// share no code with the production paths they check.

#include <span>
#include <vector>

#include "lorat/bbox.hpp"
#include "lorat/dataset.hpp"
#include "lorat/metrics.hpp"

namespace lorat::oracles {

/// Row-major triple loop, f32 accumulation in ascending k.
std::vector<float> matmul(std::span<const float> a, std::span<const float> b, int m, int k, int n);

/// Bilinear resampling of an (hs×ws) grid of d-vectors to (ht×wt), align-corners,
/// evaluated independently per output element.
std::vector<float> bilinear_align_corners(std::span<const float> grid, int hs, int ws, int d, int ht, int wt);

/// IoU by counting unit pixels of integer boxes on a side×side grid.
double pixel_count_iou(const BBox& a, const BBox& b, int side);

/// Per-track mean over frames 1.., then the plain mean over tracks, recomputed from scratch.
double flat_average_iou(const std::vector<TrackRecord>& records, const Predictions& predictions);

}  // namespace lorat::oracles
