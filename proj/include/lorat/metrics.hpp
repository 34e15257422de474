#pragma once

// Challenge metric. Each track is scored by the mean IoU over frames 1..T−1
// (frame 0 is the given box), and the report averages those per-track means
// with equal weight per track.

#include <string>
#include <vector>

#include "lorat/bbox.hpp"
#include "lorat/dataset.hpp"

namespace lorat {

/// Intersection over union; 0 when the union is empty.
double iou(const BBox& a, const BBox& b);

struct TrackScore {
  std::string video_id;
  double iou = 0.0;
  bool excluded = false;
  std::string error;
};

struct EvalReport {
  std::string method;
  std::vector<TrackScore> per_track;  // record order
  double average_iou = 0.0;
  std::string config_fingerprint;
  bool flagged = false;  // at least one track excluded
};

using Predictions = std::vector<std::vector<BBox>>;

EvalReport average_iou(const std::vector<TrackRecord>& records, const Predictions& predictions,
                       const std::string& method = "", const std::string& fingerprint = "");

/// Every frame predicted as the track's init box.
Predictions dummy_static(const std::vector<TrackRecord>& records);

}  // namespace lorat
