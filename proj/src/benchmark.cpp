#include "lorat/benchmark.hpp"

#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "lorat/errors.hpp"
#include "lorat/pipeline.hpp"

namespace lorat {

using nlohmann::json;

Method dummy_static_method() {
  return {"dummy_static", [](const Video& v) { return dummy_static({v.record}).front(); }};
}

Method tracker_method(std::string name, std::shared_ptr<const TrackerModel> model) {
  if (!model) throw ContractError("tracker_method: no model");
  return {std::move(name), [model](const Video& v) {
            if (v.frames.empty()) return std::vector<BBox>{};
            return track_video(model, v.frames, v.record.init_box()).boxes;
          }};
}

BenchmarkReport run_benchmark(const std::vector<Method>& methods, const std::vector<Video>& videos, int workers,
                              const std::string& fingerprint) {
  if (methods.empty()) throw ContractError("run_benchmark: no methods");
  if (workers < 1) throw ParameterError("run_benchmark: workers must be at least 1");
  BenchmarkReport report;
  report.config_fingerprint = fingerprint;
  std::vector<TrackRecord> records;
  for (const auto& v : videos) records.push_back(v.record);

  for (const auto& method : methods) {
    BenchmarkRow row;
    row.method = method.name;
    const auto n = static_cast<std::int64_t>(videos.size());
    Predictions preds(videos.size());
    std::vector<std::string> errors(videos.size());
#pragma omp parallel for num_threads(workers) schedule(dynamic, 1)
    for (std::int64_t i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      try {
        preds[k] = method.run(videos[k]);
      } catch (const std::exception& e) {
        errors[k] = videos[k].record.video_id + ": " + e.what();
      }
    }
    for (const auto& e : errors) {
      if (!e.empty() && !row.failed) {
        row.failed = true;
        row.error = e;
      }
    }
    if (!row.failed) {
      row.report = average_iou(records, preds, method.name, fingerprint);
      row.predictions = std::move(preds);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

json per_track_json(const EvalReport& r) {
  json per = json::object();
  for (const auto& t : r.per_track) per[t.video_id] = t.excluded ? json(nullptr) : json(t.iou);
  return per;
}

}  // namespace

std::string BenchmarkReport::text() const {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.method.size());
  std::ostringstream os;
  os << "config " << config_fingerprint << '\n';
  os << std::string(width - 6, ' ') << "method  average IoU\n";
  for (const auto& r : rows) {
    os << std::string(width - r.method.size(), ' ') << r.method << "  "
       << (r.failed ? std::string("FAILED") : fixed(r.report.average_iou, 3)) << '\n';
  }
  return os.str();
}

std::string BenchmarkReport::json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row{{"method", r.method}};
    if (r.failed) {
      row["average_iou"] = nullptr;
      row["error"] = r.error;
      row["per_track"] = nlohmann::json::object();
    } else {
      row["average_iou"] = r.report.average_iou;
      row["per_track"] = per_track_json(r.report);
    }
    out.push_back(row);
  }
  return nlohmann::json{{"config", config_fingerprint}, {"rows", out}}.dump(2);
}

std::string report_text(const EvalReport& r) {
  std::ostringstream os;
  if (!r.config_fingerprint.empty()) os << "config " << r.config_fingerprint << '\n';
  os << "method " << (r.method.empty() ? "-" : r.method) << '\n';
  for (const auto& t : r.per_track) {
    os << "  " << t.video_id << "  " << (t.excluded ? "EXCLUDED (" + t.error + ")" : fixed(t.iou, 6)) << '\n';
  }
  os << "average IoU " << fixed(r.average_iou, 6) << '\n';
  return os.str();
}

std::string report_json(const EvalReport& r) {
  return json{{"method", r.method},
              {"average_iou", r.average_iou},
              {"per_track", per_track_json(r)},
              {"config", r.config_fingerprint}}
      .dump(2);
}

}  // namespace lorat
