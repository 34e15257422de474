// Command-line front end: synthesize data, finetune, track, score and compare.
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "lorat/benchmark.hpp"
#include "lorat/checks.hpp"
#include "lorat/dataset.hpp"
#include "lorat/errors.hpp"
#include "lorat/finetune.hpp"
#include "lorat/metrics.hpp"
#include "lorat/model.hpp"
#include "lorat/run_config.hpp"
#include "lorat/synthetic.hpp"

namespace fs = std::filesystem;
using namespace lorat;

namespace {

// Shared flags are collected as strings and applied on top of the --config
// file, so a flag always wins over the same key in the file.
struct SharedFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::vector<std::string> weights;
};

void add_shared(CLI::App& cmd, SharedFlags& flags) {
  cmd.add_option("--config", flags.config_file, "key=value settings file")->check(CLI::ExistingFile);
  for (const char* key : {"preset", "seed", "annotations", "out", "pe-strategy", "lora-rank", "lora-alpha",
                          "workers", "context-factor", "search-factor"}) {
    cmd.add_option(std::string("--") + key, flags.values[key]);
  }
  cmd.add_option("--weights", flags.weights, "tensor archive(s) loaded in order");
}

RunConfig resolve(CLI::App& cmd, const SharedFlags& flags) {
  RunConfig rc;
  if (!flags.config_file.empty()) load_run_config(flags.config_file, rc);
  for (const auto& [key, value] : flags.values) {
    if (cmd.count("--" + key) > 0) rc.set(key, value);
  }
  if (!flags.weights.empty()) rc.weights = flags.weights;
  rc.tracker_config();  // validate early
  return rc;
}

std::string require_annotations(const RunConfig& rc) {
  if (rc.annotations.empty()) throw ConfigError("--annotations is required");
  return rc.annotations;
}

std::vector<Video> load_videos(const RunConfig& rc) {
  const fs::path path = require_annotations(rc);
  std::vector<Video> videos;
  for (const auto& r : read_annotations(path)) videos.push_back(load_video(r, path.parent_path()));
  return videos;
}

TrackerModel build_model(const RunConfig& rc) {
  auto model = TrackerModel::create(rc.tracker_config());
  for (const auto& w : rc.weights) model.load(read_archive(w));
  return model;
}

std::shared_ptr<const TrackerModel> tracking_model(const RunConfig& rc) {
  auto model = build_model(rc);
  if (model.adapted() && !model.is_merged()) model = model.merged();
  return std::make_shared<const TrackerModel>(std::move(model));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<Motion> parse_motions(const std::string& list) {
  std::vector<Motion> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(parse_motion(item));
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  if (out.empty()) throw ConfigError("--motion needs at least one kind");
  return out;
}

int run_synth(const RunConfig& rc, int count, int frames, int image_size, const std::string& motions) {
  if (rc.out.empty()) throw ConfigError("--out directory is required");
  const fs::path dir = rc.out;
  fs::create_directories(dir);
  auto videos = synthetic_dataset(count, frames, image_size, parse_motions(motions), rc.seed);
  std::vector<TrackRecord> records;
  for (auto& v : videos) {
    v.record.frame_source = v.record.video_id + ".lrt";
    write_frames_archive(dir / v.record.frame_source, v.frames);
    records.push_back(v.record);
  }
  write_annotations(dir / "annotations.jsonl", records);
  std::printf("wrote %zu videos to %s\n", records.size(), (dir / "annotations.jsonl").c_str());
  return 0;
}

int run_track(const RunConfig& rc) {
  const auto videos = load_videos(rc);
  const auto fp = rc.fingerprint();
  const auto report = run_benchmark({tracker_method("lorat", tracking_model(rc))}, videos, rc.workers, fp);
  const auto& row = report.rows.front();
  if (row.failed) throw NumericError("tracking failed: " + row.error);
  std::vector<TrackRecord> out;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    auto r = videos[i].record;
    r.gt_boxes = row.predictions[i];
    out.push_back(std::move(r));
  }
  if (rc.out.empty()) {
    std::fprintf(stderr, "config %s\n", fp.c_str());
    for (const auto& r : out) std::printf("%s\n", record_to_json_line(r).c_str());
  } else {
    write_annotations(rc.out, out);
    std::printf("config %s\ntracked %zu videos into %s\n", fp.c_str(), out.size(), rc.out.c_str());
  }
  return 0;
}

int run_eval(const RunConfig& rc, const std::string& predictions_path) {
  const auto records = read_annotations(require_annotations(rc));
  const auto predicted = read_annotations(predictions_path);
  std::map<std::string, const TrackRecord*> by_id;
  for (const auto& p : predicted) by_id[p.video_id] = &p;
  Predictions preds;
  for (const auto& r : records) {
    const auto it = by_id.find(r.video_id);
    preds.push_back(it == by_id.end() ? std::vector<BBox>{} : it->second->gt_boxes);
  }
  const auto report = average_iou(records, preds, fs::path(predictions_path).stem().string(), rc.fingerprint());
  std::printf("%s", report_text(report).c_str());
  if (!rc.out.empty()) write_text(rc.out, report_json(report));
  return 0;
}

int run_bench(const RunConfig& rc, const std::string& methods) {
  const auto videos = load_videos(rc);
  std::vector<Method> list;
  std::stringstream ss(methods);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name == "dummy-static" || name == "dummy_static") {
      list.push_back(dummy_static_method());
    } else if (name == "lorat") {
      list.push_back(tracker_method("lorat", tracking_model(rc)));
    } else {
      throw ConfigError("unknown method '" + name + "' (dummy-static, lorat)");
    }
  }
  const auto report = run_benchmark(list, videos, rc.workers, rc.fingerprint());
  std::printf("%s", report.text().c_str());
  if (!rc.out.empty()) write_text(rc.out, report.json());
  return 0;
}

int run_finetune(const RunConfig& rc, FinetuneOptions options) {
  if (rc.out.empty()) throw ConfigError("--out archive path is required");
  const auto videos = load_videos(rc);
  const auto cfg = rc.tracker_config();
  auto model = build_model(rc);
  if (model.is_merged()) throw StateError("finetune: weights are already merged");
  if (!model.adapted()) model = model.with_lora(cfg.lora_rank, cfg.lora_alpha, rc.seed);
  options.seed = rc.seed;
  std::printf("config %s\n", rc.fingerprint().c_str());
  const auto result = finetune(model, videos, options, [](const FinetuneStep& s) {
    if (s.step % 50 == 0) {
      std::printf("step %d loss %.4f cls %.4f reg %.4f\n", s.step, s.loss, s.classification, s.regression);
      std::fflush(stdout);
    }
  });
  for (const auto& [step, value] : result.evaluations) std::printf("eval step %d train IoU %.4f\n", step, value);
  write_archive(rc.out, model.save());
  std::printf("ran %d steps, saved %s\n", result.steps_run, rc.out.c_str());
  return 0;
}

int run_selftest(bool full) {
  checks::SuiteOptions options;
  options.include_learning = full;
  bool ok = true;
  checks::run_suite(options, [&](const checks::CheckResult& r) {
    ok = ok && r.passed;
    std::printf("%s\n", checks::format_result(r).c_str());
    std::fflush(stdout);
  });
  std::printf("selftest: %s\n", ok ? "all checks passed" : "FAILURES");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LoRA-adapted one-stream tracker"};
  app.require_subcommand(1);

  SharedFlags track_flags, eval_flags, bench_flags, tune_flags, synth_flags;

  auto* track = app.add_subcommand("track", "track every video in an annotation file");
  add_shared(*track, track_flags);

  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  add_shared(*eval, eval_flags);
  std::string predictions;
  eval->add_option("--predictions", predictions, "predicted boxes, annotation schema")->required();

  auto* bench = app.add_subcommand("bench", "compare methods on one dataset");
  add_shared(*bench, bench_flags);
  std::string methods = "dummy-static,lorat";
  bench->add_option("--methods", methods, "comma-separated: dummy-static, lorat")->capture_default_str();

  auto* tune = app.add_subcommand("finetune", "train adapters, head and embeddings");
  add_shared(*tune, tune_flags);
  FinetuneOptions options;
  tune->add_option("--steps", options.steps, "")->capture_default_str()->check(CLI::PositiveNumber);
  tune->add_option("--batch", options.batch, "")->capture_default_str()->check(CLI::PositiveNumber);
  tune->add_option("--lr", options.lr, "")->capture_default_str()->check(CLI::NonNegativeNumber);
  tune->add_option("--eval-every", options.eval_every, "track the training set every N steps")->capture_default_str();
  tune->add_option("--target-iou", options.target_iou, "stop once train IoU reaches this")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  add_shared(*synth, synth_flags);
  int count = 6, frames = 30, image_size = 128;
  std::string motions = "static,linear,sinusoidal";
  synth->add_option("--count", count, "")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--frames", frames, "")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--image-size", image_size, "")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--motion", motions, "comma-separated: static, linear, sinusoidal")->capture_default_str();

  auto* selftest = app.add_subcommand("selftest", "run the acceptance checks");
  bool full = false;
  selftest->add_flag("--full", full, "include the finetuning check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*track) return run_track(resolve(*track, track_flags));
    if (*eval) return run_eval(resolve(*eval, eval_flags), predictions);
    if (*bench) return run_bench(resolve(*bench, bench_flags), methods);
    if (*tune) return run_finetune(resolve(*tune, tune_flags), options);
    if (*synth) return run_synth(resolve(*synth, synth_flags), count, frames, image_size, motions);
    if (*selftest) return run_selftest(full);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n\n%s", e.what(), app.help().c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
