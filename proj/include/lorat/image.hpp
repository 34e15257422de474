#pragma once

#include <filesystem>

#include "lorat/tensor.hpp"

namespace lorat {

/// Images are [3×H×W] tensors with values in [0, 1].
struct ImageSize {
  std::int64_t width = 0;
  std::int64_t height = 0;
};

ImageSize image_size(const Tensor& image);

/// Binary PPM (P6, maxval 255).
Tensor read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor& image);

}  // namespace lorat
