#include "lorat/head.hpp"

#include <algorithm>
#include <cmath>

#include "lorat/errors.hpp"

namespace lorat {

HeadParams make_head(int dim, int hidden, Rng& rng) {
  // The head trains from scratch, so layers use fan-in scaling rather than the
  // small ViT init.
  auto layer = [&rng](int in, int out) {
    return make_linear(in, out, 1.0f / std::sqrt(static_cast<float>(in)), rng);
  };
  HeadParams h;
  h.cls = {layer(dim, hidden), layer(hidden, hidden), layer(hidden, 1)};
  h.reg = {layer(dim, hidden), layer(hidden, hidden), layer(hidden, 4)};
  return h;
}

namespace {

Tensor mlp3(const Tensor& x, const std::array<Linear, 3>& layers) {
  auto h = gelu(linear_forward(x, layers[0]));
  h = gelu(linear_forward(h, layers[1]));
  return linear_forward(h, layers[2]);
}

}  // namespace

HeadOutput head_forward(const Tensor& features, const HeadParams& params) {
  if (features.rank() != 3) throw DimensionError("head_forward: expected [h x w x D] features");
  const GridSize grid{static_cast<int>(features.dim(0)), static_cast<int>(features.dim(1))};
  const auto d = features.dim(2);
  if (params.cls[0].in_features() != d || params.reg[0].in_features() != d) {
    throw ConfigError("head_forward: head expects " + std::to_string(params.cls[0].in_features()) +
                      "-dim features, got " + std::to_string(d));
  }
  if (params.cls[2].out_features() != 1 || params.reg[2].out_features() != 4) {
    throw ConfigError("head_forward: output layers must produce 1 score and 4 distances");
  }
  const auto n = static_cast<std::int64_t>(grid.count());
  auto flat = reshape(features, {n, d});
  auto scores = reshape(mlp3(flat, params.cls), {grid.h, grid.w});
  auto regs = reshape(softplus(mlp3(flat, params.reg)), {grid.h, grid.w, 4});
  return {scores, regs, grid};
}

std::array<double, 2> cell_center(int i, int j, GridSize grid, double search_size) {
  return {(j + 0.5) * search_size / grid.w, (i + 0.5) * search_size / grid.h};
}

std::vector<Candidate> decode_boxes(const HeadOutput& out, double search_size) {
  if (!(search_size > 0.0)) throw ParameterError("decode_boxes: search size must be positive");
  const auto s = out.scores.data();
  const auto r = out.regs.data();
  std::vector<Candidate> boxes;
  boxes.reserve(static_cast<std::size_t>(out.grid.count()));
  for (int i = 0; i < out.grid.h; ++i)
    for (int j = 0; j < out.grid.w; ++j) {
      const auto cell = static_cast<std::size_t>(i * out.grid.w + j);
      const auto [cx, cy] = cell_center(i, j, out.grid, search_size);
      const double l = r[cell * 4 + 0] * search_size;
      const double t = r[cell * 4 + 1] * search_size;
      const double rr = r[cell * 4 + 2] * search_size;
      const double b = r[cell * 4 + 3] * search_size;
      boxes.push_back({BBox{cx - l, cy - t, l + rr, t + b}, s[cell]});
    }
  return boxes;
}

std::array<double, 4> encode_box(const BBox& box, int i, int j, GridSize grid, double search_size) {
  const auto [cx, cy] = cell_center(i, j, grid, search_size);
  return {(cx - box.x) / search_size, (cy - box.y) / search_size, (box.right() - cx) / search_size,
          (box.bottom() - cy) / search_size};
}

std::size_t select_best_index(std::span<const Candidate> candidates) {
  if (candidates.empty()) throw ContractError("select_best: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i)
    if (candidates[i].score > candidates[best].score) best = i;
  return best;
}

BBox select_best(std::span<const Candidate> candidates) {
  return candidates[select_best_index(candidates)].box;
}

std::array<int, 2> cell_of_point(double x, double y, GridSize grid, double search_size) {
  const int j = static_cast<int>(std::floor(x * grid.w / search_size));
  const int i = static_cast<int>(std::floor(y * grid.h / search_size));
  return {std::clamp(i, 0, grid.h - 1), std::clamp(j, 0, grid.w - 1)};
}

HeadLossParts head_loss(const HeadOutput& out, const BBox& target, double search_size, float l1_weight) {
  const auto [pi, pj] = cell_of_point(target.cx(), target.cy(), out.grid, search_size);
  const auto n = static_cast<std::int64_t>(out.grid.count());
  const auto pos = static_cast<std::int64_t>(pi * out.grid.w + pj);

  std::vector<float> labels(static_cast<std::size_t>(n), 0.0f);
  labels[static_cast<std::size_t>(pos)] = 1.0f;
  auto cls = bce_with_logits(reshape(out.scores, {n}), Tensor({n}, std::move(labels)));

  std::vector<std::int64_t> rows{pos};
  std::vector<float> goals;
  auto push_goal = [&](int i, int j) {
    for (double v : encode_box(target, i, j, out.grid, search_size)) goals.push_back(static_cast<float>(v));
  };
  push_goal(pi, pj);
  for (int i = 0; i < out.grid.h; ++i) {
    for (int j = 0; j < out.grid.w; ++j) {
      if (i == pi && j == pj) continue;
      const auto [cx, cy] = cell_center(i, j, out.grid, search_size);
      if (cx > target.x && cx < target.right() && cy > target.y && cy < target.bottom()) {
        rows.push_back(static_cast<std::int64_t>(i * out.grid.w + j));
        push_goal(i, j);
      }
    }
  }
  const auto count = static_cast<std::int64_t>(rows.size());
  auto pred = select_rows(reshape(out.regs, {n, 4}), rows);
  Tensor goal({count, 4}, std::move(goals));
  auto reg = scale(sum(abs(sub(pred, goal))), 1.0f / static_cast<float>(count));
  auto total = add(cls, scale(reg, l1_weight));
  return {total, cls.item(), reg.item()};
}

}  // namespace lorat
