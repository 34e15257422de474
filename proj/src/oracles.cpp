#include "lorat/oracles.hpp"

#include <algorithm>
#include <cmath>

namespace lorat::oracles {

std::vector<float> matmul(std::span<const float> a, std::span<const float> b, int m, int k, int n) {
  std::vector<float> c(static_cast<std::size_t>(m * n));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      float s = 0.0f;
      for (int p = 0; p < k; ++p) s += a[static_cast<std::size_t>(i * k + p)] * b[static_cast<std::size_t>(p * n + j)];
      c[static_cast<std::size_t>(i * n + j)] = s;
    }
  return c;
}

std::vector<float> bilinear_align_corners(std::span<const float> grid, int hs, int ws, int d, int ht, int wt) {
  std::vector<float> out(static_cast<std::size_t>(ht * wt * d));
  auto value = [&](int y, int x, int c) {
    return static_cast<double>(grid[static_cast<std::size_t>((y * ws + x) * d + c)]);
  };
  for (int i = 0; i < ht; ++i)
    for (int j = 0; j < wt; ++j) {
      const double sy = ht == 1 ? 0.0 : i * (hs - 1.0) / (ht - 1.0);
      const double sx = wt == 1 ? 0.0 : j * (ws - 1.0) / (wt - 1.0);
      const int y0 = std::min(static_cast<int>(sy), hs - 1);
      const int x0 = std::min(static_cast<int>(sx), ws - 1);
      const int y1 = std::min(y0 + 1, hs - 1);
      const int x1 = std::min(x0 + 1, ws - 1);
      const double ty = sy - y0, tx = sx - x0;
      for (int c = 0; c < d; ++c) {
        const double top = value(y0, x0, c) * (1 - tx) + value(y0, x1, c) * tx;
        const double bottom = value(y1, x0, c) * (1 - tx) + value(y1, x1, c) * tx;
        out[static_cast<std::size_t>((i * wt + j) * d + c)] = static_cast<float>(top * (1 - ty) + bottom * ty);
      }
    }
  return out;
}

double pixel_count_iou(const BBox& a, const BBox& b, int side) {
  long in_a = 0, in_b = 0, both = 0;
  auto inside = [](const BBox& box, int x, int y) {
    return x >= box.x && x < box.x + box.w && y >= box.y && y < box.y + box.h;
  };
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const bool ia = inside(a, x, y), ib = inside(b, x, y);
      in_a += ia;
      in_b += ib;
      both += ia && ib;
    }
  const long uni = in_a + in_b - both;
  return uni == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(uni);
}

double flat_average_iou(const std::vector<TrackRecord>& records, const Predictions& predictions) {
  std::vector<double> per_track;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& gt = records[r].gt_boxes;
    std::vector<double> frame_ious;
    for (std::size_t t = 1; t < gt.size(); ++t) {
      const auto& p = predictions[r][t];
      const double x1 = std::max(p.x, gt[t].x), y1 = std::max(p.y, gt[t].y);
      const double x2 = std::min(p.x + p.w, gt[t].x + gt[t].w), y2 = std::min(p.y + p.h, gt[t].y + gt[t].h);
      const double inter = std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1);
      const double uni = p.w * p.h + gt[t].w * gt[t].h - inter;
      frame_ious.push_back(uni > 0 ? inter / uni : 0.0);
    }
    double s = 0.0;
    for (double v : frame_ious) s += v;
    per_track.push_back(s / static_cast<double>(frame_ious.size()));
  }
  double s = 0.0;
  for (double v : per_track) s += v;
  return s / static_cast<double>(per_track.size());
}

}  // namespace lorat::oracles
