#pragma once

#include <cmath>

namespace lorat {

/// Axis-aligned box in continuous pixel coordinates; (x, y) is the top-left corner.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double right() const { return x + w; }
  double bottom() const { return y + h; }
  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h);
  }
  bool operator==(const BBox&) const = default;
};

}  // namespace lorat
