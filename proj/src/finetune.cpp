#include "lorat/finetune.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "lorat/errors.hpp"
#include "lorat/metrics.hpp"
#include "lorat/optim.hpp"
#include "lorat/pipeline.hpp"

namespace lorat {

namespace {

struct TemplateCache {
  Tensor tokens;
  std::vector<int> ids;
};

TemplateCache build_template(const TrackerModel& model, const Video& v) {
  const auto& cfg = model.config();
  NoGradGuard no_grad;
  const auto& init = v.record.init_box();
  const auto spec = template_spec(init, cfg.context_factor, cfg.template_size);
  const double side = cfg.template_size;
  const GridSize tgrid{cfg.template_grid(), cfg.template_grid()};
  const GridSize sgrid{cfg.search_grid(), cfg.search_grid()};
  auto ids = token_type_ids(tgrid, sgrid, clamp_box(image_to_crop(init, spec), side, side), cfg.patch);
  return {model.embed_template(crop_square(v.frames.front(), spec)), std::move(ids.ids)};
}

}  // namespace

double tracking_iou(const TrackerModel& model, const std::vector<Video>& videos) {
  auto deploy = std::make_shared<const TrackerModel>(model.adapted() && !model.is_merged() ? model.merged() : model.clone());
  std::vector<TrackRecord> records;
  Predictions preds;
  for (const auto& v : videos) {
    records.push_back(v.record);
    preds.push_back(track_video(deploy, v.frames, v.record.init_box()).boxes);
  }
  return average_iou(records, preds).average_iou;
}

FinetuneResult finetune(TrackerModel& model, const std::vector<Video>& videos, const FinetuneOptions& opt,
                        const std::function<void(const FinetuneStep&)>& on_step) {
  if (!model.adapted() || model.is_merged()) throw ContractError("finetune: model must carry unmerged adapters");
  if (videos.empty()) throw ContractError("finetune: no training videos");
  if (opt.batch < 1 || opt.steps < 0) throw ParameterError("finetune: invalid batch or step count");
  for (const auto& v : videos) {
    if (v.frames.size() < 2 || v.frames.size() != v.record.gt_boxes.size()) {
      throw ContractError("finetune: video '" + v.record.video_id + "' needs at least two annotated frames");
    }
  }
  const auto& cfg = model.config();
  std::vector<TemplateCache> templates;
  for (const auto& v : videos) templates.push_back(build_template(model, v));

  std::vector<Tensor> params;
  for (auto& p : model.trainable_parameters()) params.push_back(p.tensor);
  Adam adam(params, {opt.lr});

  Rng rng(opt.seed);
  std::uniform_int_distribution<std::size_t> pick_video(0, videos.size() - 1);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  FinetuneResult result;
  for (int step = 1; step <= opt.steps; ++step) {
    if (opt.cosine_decay && opt.steps > 1) {
      const double progress = static_cast<double>(step - 1) / (opt.steps - 1);
      const double floor = opt.final_lr_fraction;
      adam.set_lr(static_cast<float>(opt.lr * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)))));
    }
    adam.zero_grad();
    FinetuneStep log{step, 0.0f, 0.0f, 0.0f};
    for (int b = 0; b < opt.batch; ++b) {
      const auto vi = pick_video(rng);
      const auto& v = videos[vi];
      std::uniform_int_distribution<std::size_t> pick_frame(1, v.frames.size() - 1);
      const auto t = pick_frame(rng);
      BBox ref = v.record.gt_boxes[t - 1];
      const double extent = std::sqrt(std::max(ref.area(), 1e-6));
      const double s = std::exp(opt.scale_jitter * unit(rng));
      const double cx = ref.cx() + opt.center_jitter * extent * unit(rng);
      const double cy = ref.cy() + opt.center_jitter * extent * unit(rng);
      ref = {cx - 0.5 * ref.w * s, cy - 0.5 * ref.h * s, ref.w * s, ref.h * s};
      const auto spec = search_spec(ref, cfg.search_factor, cfg.search_size);
      const BBox target = image_to_crop(v.record.gt_boxes[t], spec);

      try {
        const auto out = model.forward(templates[vi].tokens, templates[vi].ids, crop_square(v.frames[t], spec));
        auto parts = head_loss(out, target, cfg.search_size, opt.l1_weight);
        const float inv = 1.0f / static_cast<float>(opt.batch);
        log.loss += parts.total.item() * inv;
        log.classification += parts.classification * inv;
        log.regression += parts.regression * inv;
        backward(scale(parts.total, inv));
      } catch (const NumericError& e) {
        throw NumericError("finetune: loss diverged at step " + std::to_string(step) + " (" + e.what() + ")");
      }
    }
    try {
      adam.step();
    } catch (const NumericError& e) {
      throw NumericError("finetune: parameters diverged at step " + std::to_string(step) + " (" + e.what() + ")");
    }
    result.log.push_back(log);
    result.steps_run = step;
    if (on_step) on_step(log);
    if (opt.eval_every > 0 && step % opt.eval_every == 0) {
      const double score = tracking_iou(model, videos);
      result.evaluations.emplace_back(step, score);
      if (score >= opt.target_iou) {
        result.reached_target = true;
        break;
      }
    }
  }
  adam.zero_grad();
  result.trainable = model.save(true);
  return result;
}

}  // namespace lorat
