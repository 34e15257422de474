#pragma once

// Named-tensor archive: one UTF-8 JSON header line
//   {"entries":[{"name":..., "dtype":"f32", "shape":[...]}, ...]}
// followed by the little-endian f32 payloads concatenated in header order.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lorat/tensor.hpp"

namespace lorat {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using TensorArchive = std::vector<NamedTensor>;

std::string encode_archive(const TensorArchive& archive);
TensorArchive decode_archive(std::string_view bytes);

void write_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive read_archive(const std::filesystem::path& path);

/// nullptr when absent.
const Tensor* find_tensor(const TensorArchive& archive, std::string_view name);

}  // namespace lorat
