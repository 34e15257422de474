#include "lorat/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lorat/archive.hpp"
#include "lorat/errors.hpp"
#include "lorat/image.hpp"

namespace lorat {

namespace fs = std::filesystem;
using nlohmann::json;

std::string record_to_json_line(const TrackRecord& r) {
  json boxes = json::array();
  for (const auto& b : r.gt_boxes) boxes.push_back({b.x, b.y, b.w, b.h});
  return json{{"video_id", r.video_id}, {"frames", r.frame_source}, {"boxes", boxes}}.dump();
}

TrackRecord record_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(std::string("annotations: malformed line: ") + e.what());
  }
  TrackRecord r;
  try {
    r.video_id = j.at("video_id").get<std::string>();
    r.frame_source = j.value("frames", "");
    for (const auto& b : j.at("boxes")) {
      if (!b.is_array() || b.size() != 4) throw Error("annotations: box must be [x,y,w,h]");
      BBox box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
      if (box.w < 0.0 || box.h < 0.0) throw Error("annotations: negative box extent in '" + r.video_id + "'");
      r.gt_boxes.push_back(box);
    }
  } catch (const json::exception& e) {
    throw Error(std::string("annotations: ") + e.what());
  }
  return r;
}

std::vector<TrackRecord> read_annotations(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("annotations: cannot open " + path.string());
  std::vector<TrackRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(record_from_json_line(line));
  }
  return out;
}

void write_annotations(const fs::path& path, const std::vector<TrackRecord>& records) {
  std::ofstream os(path);
  if (!os) throw Error("annotations: cannot open " + path.string() + " for writing");
  for (const auto& r : records) os << record_to_json_line(r) << '\n';
}

std::vector<BBox> read_got10k_groundtruth(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("got10k: cannot open " + path.string());
  std::vector<BBox> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    BBox b;
    if (!(ss >> b.x >> b.y >> b.w >> b.h)) {
      throw Error("got10k: line " + std::to_string(lineno) + " is not x,y,w,h");
    }
    out.push_back(b);
  }
  return out;
}

TrackRecord got10k_record(const fs::path& sequence_dir, const std::string& video_id) {
  return {video_id, sequence_dir.string(), read_got10k_groundtruth(sequence_dir / "groundtruth.txt")};
}

std::vector<Tensor> load_frames(const TrackRecord& record, const fs::path& base_dir) {
  fs::path src = record.frame_source;
  if (src.is_relative()) src = base_dir / src;
  std::vector<Tensor> frames;
  if (fs::is_directory(src)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(src))
      if (e.path().extension() == ".ppm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) frames.push_back(read_ppm(f));
  } else {
    const auto archive = read_archive(src);
    const Tensor* all = find_tensor(archive, "frames");
    if (!all) throw Error("frames: archive " + src.string() + " has no 'frames' tensor");
    if (all->rank() != 4 || all->dim(1) != 3) throw DimensionError("frames: expected [T x 3 x H x W]");
    const auto t = all->dim(0), h = all->dim(2), w = all->dim(3);
    const auto per = static_cast<std::size_t>(3 * h * w);
    for (std::int64_t i = 0; i < t; ++i) {
      auto first = all->data().begin() + static_cast<std::ptrdiff_t>(per * static_cast<std::size_t>(i));
      frames.emplace_back(Shape{3, h, w}, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(per)));
    }
  }
  if (frames.size() != record.gt_boxes.size()) {
    throw Error("frames: '" + record.video_id + "' has " + std::to_string(frames.size()) + " frames but " +
                std::to_string(record.gt_boxes.size()) + " boxes");
  }
  return frames;
}

Video load_video(const TrackRecord& record, const fs::path& base_dir) {
  return {record, load_frames(record, base_dir)};
}

void write_frames_archive(const fs::path& path, const std::vector<Tensor>& frames) {
  if (frames.empty()) throw ContractError("frames: nothing to write");
  const auto shape = frames.front().shape();
  std::vector<float> all;
  for (const auto& f : frames) {
    if (f.shape() != shape) throw DimensionError("frames: all frames must share a shape");
    all.insert(all.end(), f.data().begin(), f.data().end());
  }
  Shape s{static_cast<std::int64_t>(frames.size())};
  s.insert(s.end(), shape.begin(), shape.end());
  write_archive(path, {{"frames", Tensor(std::move(s), std::move(all))}});
}

}  // namespace lorat
