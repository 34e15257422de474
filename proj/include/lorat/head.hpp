#pragma once

// MLP-only prediction head. Two per-cell branches of three linear layers each:
// a classification logit and (l, t, r, b) edge distances from the cell center,
// normalized by the search-region side. Every cell yields one candidate box.

#include <array>
#include <span>
#include <vector>

#include "lorat/bbox.hpp"
#include "lorat/embedding.hpp"
#include "lorat/encoder.hpp"

namespace lorat {

struct HeadParams {
  std::array<Linear, 3> cls;  // D → hidden → hidden → 1
  std::array<Linear, 3> reg;  // D → hidden → hidden → 4
};

HeadParams make_head(int dim, int hidden, Rng& rng);

struct HeadOutput {
  Tensor scores;  // [h×w] logits
  Tensor regs;    // [h×w×4] softplus-activated (l, t, r, b)
  GridSize grid;
};

/// `features` is [h×w×D] (or [N×D] with `grid` giving the layout).
HeadOutput head_forward(const Tensor& features, const HeadParams& params);

struct Candidate {
  BBox box;
  float score = 0.0f;
};

/// Pixel center of cell (i, j) in a `search_size`-wide crop.
std::array<double, 2> cell_center(int i, int j, GridSize grid, double search_size);

/// One box per cell, in search-crop pixel coordinates, row-major cell order.
std::vector<Candidate> decode_boxes(const HeadOutput& out, double search_size);

/// Inverse of the per-cell decoding: normalized (l, t, r, b) of `box` relative to cell (i, j).
std::array<double, 4> encode_box(const BBox& box, int i, int j, GridSize grid, double search_size);

/// Highest score; ties go to the lowest index. Throws ContractError when empty.
std::size_t select_best_index(std::span<const Candidate> candidates);
BBox select_best(std::span<const Candidate> candidates);

/// Cell whose area contains (x, y), clamped to the grid.
std::array<int, 2> cell_of_point(double x, double y, GridSize grid, double search_size);

struct HeadLossParts {
  Tensor total;
  float classification = 0.0f;
  float regression = 0.0f;
};

/// BCE over all cells with the GT-center cell as the only positive, plus
/// `l1_weight` × L1 on (l, t, r, b). Regression positives are the center cell
/// and every cell whose center lies strictly inside the box; their L1 terms
/// are averaged.
HeadLossParts head_loss(const HeadOutput& out, const BBox& target_in_crop, double search_size,
                        float l1_weight);

}  // namespace lorat
