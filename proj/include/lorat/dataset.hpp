#pragma once

// Track records and their on-disk forms: JSON Lines annotations
//   {"video_id": "...", "frames": "<ppm dir or archive>", "boxes": [[x,y,w,h], ...]}
// (predictions use the same schema), frame loading, and GOT-10k ground truth.

#include <filesystem>
#include <string>
#include <vector>

#include "lorat/bbox.hpp"
#include "lorat/tensor.hpp"

namespace lorat {

struct TrackRecord {
  std::string video_id;
  std::string frame_source;  // PPM directory or named-tensor archive holding "frames" [T×3×H×W]
  std::vector<BBox> gt_boxes;

  const BBox& init_box() const { return gt_boxes.front(); }
};

struct Video {
  TrackRecord record;
  std::vector<Tensor> frames;
};

std::string record_to_json_line(const TrackRecord& record);
TrackRecord record_from_json_line(const std::string& line);

std::vector<TrackRecord> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const std::vector<TrackRecord>& records);

/// Comma-separated "x,y,w,h" per line (GOT-10k groundtruth.txt).
std::vector<BBox> read_got10k_groundtruth(const std::filesystem::path& path);
TrackRecord got10k_record(const std::filesystem::path& sequence_dir, const std::string& video_id);

/// Relative frame sources resolve against `base_dir`. Checks the frame count against the boxes.
std::vector<Tensor> load_frames(const TrackRecord& record, const std::filesystem::path& base_dir);
Video load_video(const TrackRecord& record, const std::filesystem::path& base_dir);

void write_frames_archive(const std::filesystem::path& path, const std::vector<Tensor>& frames);

}  // namespace lorat
