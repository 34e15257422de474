#include "lorat/metrics.hpp"

#include <algorithm>

namespace lorat {

double iou(const BBox& a, const BBox& b) {
  const double iw = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
  const double ih = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
  const double inter = iw * ih;
  // Areas use the same edge differences as the overlap so that iou(a, a) is exactly 1.
  const double area_a = (a.right() - a.x) * (a.bottom() - a.y);
  const double area_b = (b.right() - b.x) * (b.bottom() - b.y);
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

EvalReport average_iou(const std::vector<TrackRecord>& records, const Predictions& predictions,
                       const std::string& method, const std::string& fingerprint) {
  EvalReport report;
  report.method = method;
  report.config_fingerprint = fingerprint;
  double total = 0.0;
  int counted = 0;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    TrackScore score{rec.video_id, 0.0, false, {}};
    if (r >= predictions.size() || predictions[r].size() != rec.gt_boxes.size()) {
      score.excluded = true;
      score.error = "prediction count does not match frame count";
    } else if (rec.gt_boxes.size() < 2) {
      score.excluded = true;
      score.error = "track has no scored frames";
    } else {
      double acc = 0.0;
      for (std::size_t t = 1; t < rec.gt_boxes.size(); ++t) acc += iou(predictions[r][t], rec.gt_boxes[t]);
      score.iou = acc / static_cast<double>(rec.gt_boxes.size() - 1);
      total += score.iou;
      ++counted;
    }
    report.flagged = report.flagged || score.excluded;
    report.per_track.push_back(std::move(score));
  }
  report.average_iou = counted > 0 ? total / counted : 0.0;
  return report;
}

Predictions dummy_static(const std::vector<TrackRecord>& records) {
  Predictions out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.emplace_back(r.gt_boxes.size(), r.gt_boxes.empty() ? BBox{} : r.init_box());
  }
  return out;
}

}  // namespace lorat
