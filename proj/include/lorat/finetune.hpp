#pragma once

#include <functional>
#include <vector>

#include "lorat/archive.hpp"
#include "lorat/dataset.hpp"
#include "lorat/model.hpp"

namespace lorat {

struct FinetuneOptions {
  int steps = 2000;
  int batch = 8;
  float lr = 2e-3f;
  /// Cosine-decay the learning rate from `lr` to `lr * final_lr_fraction` over `steps`.
  bool cosine_decay = true;
  float final_lr_fraction = 0.05f;
  float l1_weight = 5.0f;
  /// Search-center jitter, as a fraction of sqrt(w·h) of the reference box.
  double center_jitter = 0.25;
  /// Log-uniform scale jitter half-width for the reference box.
  double scale_jitter = 0.15;
  std::uint64_t seed = 0;
  /// When > 0, track the training set every `eval_every` steps and stop once
  /// its average IoU reaches `target_iou`.
  int eval_every = 0;
  double target_iou = 1.1;
};

struct FinetuneStep {
  int step = 0;
  float loss = 0.0f;
  float classification = 0.0f;
  float regression = 0.0f;
};

struct FinetuneResult {
  std::vector<FinetuneStep> log;
  std::vector<std::pair<int, double>> evaluations;  // (step, train average IoU)
  int steps_run = 0;
  bool reached_target = false;
  /// Adapters, head and embedding tables.
  TensorArchive trainable;
};

/// Trains the trainable tensors of an adapted, unmerged model in place on
/// (template, search, target) triples sampled from `videos`. Throws NumericError
/// with the step number if the loss diverges.
FinetuneResult finetune(TrackerModel& model, const std::vector<Video>& videos, const FinetuneOptions& options,
                        const std::function<void(const FinetuneStep&)>& on_step = {});

/// Average IoU of the merged model tracking every video.
double tracking_iou(const TrackerModel& model, const std::vector<Video>& videos);

}  // namespace lorat
