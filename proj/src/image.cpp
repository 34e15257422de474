#include "lorat/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "lorat/errors.hpp"

namespace lorat {

ImageSize image_size(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("image: expected [3xHxW], got " + shape_str(image.shape()));
  }
  return {image.dim(2), image.dim(1)};
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("ppm: cannot open " + path.string());
  if (next_token(is) != "P6") throw Error("ppm: " + path.string() + " is not a binary P6 file");
  std::int64_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoll(next_token(is));
    h = std::stoll(next_token(is));
    maxval = std::stoll(next_token(is));
  } catch (const std::exception&) {
    throw Error("ppm: malformed header in " + path.string());
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw Error("ppm: only 8-bit images are supported");
  std::vector<unsigned char> raw(static_cast<std::size_t>(w * h * 3));
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (is.gcount() != static_cast<std::streamsize>(raw.size())) throw Error("ppm: truncated pixel data");
  std::vector<float> planar(raw.size());
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::int64_t c = 0; c < 3; ++c)
        planar[static_cast<std::size_t>((c * h + y) * w + x)] =
            static_cast<float>(raw[static_cast<std::size_t>((y * w + x) * 3 + c)]) / 255.0f;
  return Tensor({3, h, w}, std::move(planar));
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  const auto [w, h] = image_size(image);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("ppm: cannot open " + path.string() + " for writing");
  os << "P6\n" << w << ' ' << h << "\n255\n";
  const auto d = image.data();
  std::vector<unsigned char> raw(static_cast<std::size_t>(w * h * 3));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::int64_t c = 0; c < 3; ++c) {
        const float v = std::clamp(d[static_cast<std::size_t>((c * h + y) * w + x)], 0.0f, 1.0f);
        raw[static_cast<std::size_t>((y * w + x) * 3 + c)] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

}  // namespace lorat
