#pragma once

// Method-comparison runner. Tracks are distributed over OpenMP workers and the
// results are gathered by track index, so the worker count never changes a
// reported number.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lorat/dataset.hpp"
#include "lorat/metrics.hpp"
#include "lorat/model.hpp"

namespace lorat {

struct Method {
  std::string name;
  /// Per-frame predictions for one video; element 0 is the init box.
  std::function<std::vector<BBox>(const Video&)> run;
};

Method dummy_static_method();
/// `model` must be merged or unadapted.
Method tracker_method(std::string name, std::shared_ptr<const TrackerModel> model);

struct BenchmarkRow {
  std::string method;
  bool failed = false;
  std::string error;
  EvalReport report;
  Predictions predictions;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
  std::string config_fingerprint;

  /// Plain-text table: method, average IoU (or FAILED).
  std::string text() const;
  /// [{method, average_iou, per_track}, ...] with the fingerprint alongside.
  std::string json() const;
};

BenchmarkReport run_benchmark(const std::vector<Method>& methods, const std::vector<Video>& videos, int workers,
                              const std::string& fingerprint = "");

std::string report_text(const EvalReport& report);
std::string report_json(const EvalReport& report);

}  // namespace lorat
