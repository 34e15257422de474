#include "lorat/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "lorat/errors.hpp"

namespace lorat {

namespace {

using nlohmann::json;

void append_le(std::string& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  char buf[4];
  std::memcpy(buf, &bits, 4);
  out.append(buf, 4);
}

float read_le(const char* p) {
  std::uint32_t bits;
  std::memcpy(&bits, p, 4);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::string encode_archive(const TensorArchive& archive) {
  json entries = json::array();
  std::size_t payload = 0;
  for (const auto& [name, t] : archive) {
    if (!t.defined()) throw ContractError("archive: tensor '" + name + "' is undefined");
    entries.push_back({{"name", name}, {"dtype", "f32"}, {"shape", t.shape()}});
    payload += static_cast<std::size_t>(t.numel()) * 4;
  }
  std::string out = json{{"entries", entries}}.dump();
  out.push_back('\n');
  out.reserve(out.size() + payload);
  for (const auto& entry : archive)
    for (float v : entry.tensor.data()) append_le(out, v);
  return out;
}

TensorArchive decode_archive(std::string_view bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string_view::npos) throw Error("archive: missing header terminator");
  json header;
  try {
    header = json::parse(bytes.substr(0, newline));
  } catch (const json::exception& e) {
    throw Error(std::string("archive: malformed header: ") + e.what());
  }
  if (!header.contains("entries") || !header["entries"].is_array()) {
    throw Error("archive: header has no entries array");
  }
  TensorArchive out;
  std::size_t offset = newline + 1;
  for (const auto& e : header["entries"]) {
    if (e.value("dtype", "") != "f32") throw Error("archive: only f32 entries are supported");
    auto name = e.at("name").get<std::string>();
    auto shape = e.at("shape").get<Shape>();
    const auto n = static_cast<std::size_t>(shape_numel(shape));
    if (offset + n * 4 > bytes.size()) throw Error("archive: payload truncated at '" + name + "'");
    std::vector<float> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = read_le(bytes.data() + offset + i * 4);
    offset += n * 4;
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  if (offset != bytes.size()) throw Error("archive: trailing bytes after payload");
  return out;
}

void write_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("archive: cannot open " + path.string() + " for writing");
  const auto bytes = encode_archive(archive);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("archive: write failed for " + path.string());
}

TensorArchive read_archive(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("archive: cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_archive(bytes);
}

const Tensor* find_tensor(const TensorArchive& archive, std::string_view name) {
  for (const auto& e : archive)
    if (e.name == name) return &e.tensor;
  return nullptr;
}

}  // namespace lorat
