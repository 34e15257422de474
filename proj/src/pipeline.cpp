#include "lorat/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "lorat/errors.hpp"

namespace lorat {

Tensor crop_square(const Tensor& image, const CropSpec& spec) {
  const auto [w, h] = image_size(image);
  if (spec.out_size < 1) throw ParameterError("crop_square: output size must be at least 1");
  if (!(spec.side > 0.0) || !std::isfinite(spec.side)) throw ParameterError("crop_square: side must be positive");
  const auto src = image.data();
  const auto plane = static_cast<std::size_t>(w * h);

  std::array<float, 3> fill{};
  for (std::size_t c = 0; c < 3; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += src[c * plane + i];
    fill[c] = static_cast<float>(acc / static_cast<double>(plane));
  }

  const int out = spec.out_size;
  const double inv = 1.0 / spec.scale();
  const double x0 = spec.x0(), y0 = spec.y0();
  std::vector<float> dst(static_cast<std::size_t>(3 * out * out));
  for (int oy = 0; oy < out; ++oy) {
    const double sy = y0 + (oy + 0.5) * inv - 0.5;
    const auto iy = static_cast<std::int64_t>(std::floor(sy));
    const float fy = static_cast<float>(sy - static_cast<double>(iy));
    for (int ox = 0; ox < out; ++ox) {
      const double sx = x0 + (ox + 0.5) * inv - 0.5;
      const auto ix = static_cast<std::int64_t>(std::floor(sx));
      const float fx = static_cast<float>(sx - static_cast<double>(ix));
      for (std::size_t c = 0; c < 3; ++c) {
        auto px = [&](std::int64_t yy, std::int64_t xx) {
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) return fill[c];
          return src[c * plane + static_cast<std::size_t>(yy * w + xx)];
        };
        const float top = (1.0f - fx) * px(iy, ix) + fx * px(iy, ix + 1);
        const float bot = (1.0f - fx) * px(iy + 1, ix) + fx * px(iy + 1, ix + 1);
        dst[(c * static_cast<std::size_t>(out) + static_cast<std::size_t>(oy)) * static_cast<std::size_t>(out) +
            static_cast<std::size_t>(ox)] = (1.0f - fy) * top + fy * bot;
      }
    }
  }
  return Tensor({3, out, out}, std::move(dst));
}

CropSpec template_spec(const BBox& init_box, double context_factor, int out_size) {
  if (!(context_factor > 0.0)) throw ParameterError("template_spec: context factor must be positive");
  if (!init_box.finite() || !(init_box.area() > 0.0)) throw ParameterError("template_spec: box has no area");
  return {init_box.cx(), init_box.cy(), context_factor * std::sqrt(init_box.w * init_box.h), out_size};
}

CropSpec search_spec(const BBox& prev_box, double search_factor, int out_size, const std::optional<BBox>& last_valid) {
  if (!(search_factor > 0.0)) throw ParameterError("search_spec: search factor must be positive");
  const BBox* box = &prev_box;
  if (!prev_box.finite() || !(prev_box.area() > 0.0)) {
    if (!last_valid || !last_valid->finite() || !(last_valid->area() > 0.0)) {
      throw ParameterError("search_spec: no box with positive area available");
    }
    box = &*last_valid;
  }
  return {box->cx(), box->cy(), search_factor * std::sqrt(box->w * box->h), out_size};
}

BBox image_to_crop(const BBox& box, const CropSpec& spec) {
  const double s = spec.scale();
  return {(box.x - spec.x0()) * s, (box.y - spec.y0()) * s, box.w * s, box.h * s};
}

BBox clamp_box(const BBox& box, double width, double height) {
  static constexpr double kMinSide = 1e-3;
  auto axis = [](double lo, double len, double limit, double& out_lo, double& out_len) {
    double a = std::clamp(lo, 0.0, limit);
    double b = std::clamp(lo + len, 0.0, limit);
    out_len = std::max(b - a, kMinSide);
    if (a + out_len > limit) a = std::max(limit - out_len, 0.0);
    out_lo = a;
  };
  BBox r;
  axis(box.x, box.w, width, r.x, r.w);
  axis(box.y, box.h, height, r.y, r.h);
  return r;
}

BBox box_to_image(const BBox& b, const CropSpec& spec, std::optional<ImageSize> bounds) {
  const double inv = 1.0 / spec.scale();
  BBox out{b.x * inv + spec.x0(), b.y * inv + spec.y0(), b.w * inv, b.h * inv};
  if (bounds) out = clamp_box(out, static_cast<double>(bounds->width), static_cast<double>(bounds->height));
  return out;
}

PostprocessResult postprocess(const BBox& box, float score, const TrackerState& state, const Refiner& refiner) {
  if (!refiner) return {box, false};
  try {
    BBox refined = refiner(box, score, state);
    if (!refined.finite() || refined.w < 0.0 || refined.h < 0.0) return {box, true};
    return {refined, false};
  } catch (const std::exception&) {
    return {box, true};
  }
}

Refiner clamp_to_image_refiner() {
  return [](const BBox& box, float, const TrackerState& state) {
    const BBox bounds = image_to_crop({0.0, 0.0, static_cast<double>(state.image.width),
                                      static_cast<double>(state.image.height)},
                                     state.last_search);
    if (box.x >= bounds.x && box.y >= bounds.y && box.right() <= bounds.right() && box.bottom() <= bounds.bottom()) {
      return box;
    }
    BBox r = clamp_box({box.x - bounds.x, box.y - bounds.y, box.w, box.h}, bounds.w, bounds.h);
    r.x += bounds.x;
    r.y += bounds.y;
    return r;
  };
}

TrackerState track_init(std::shared_ptr<const TrackerModel> model, const Tensor& first_frame, const BBox& init_box) {
  if (!model) throw ContractError("track_init: no model");
  if (model->adapted() && !model->is_merged()) {
    throw StateError("track_init: merge adapters before tracking");
  }
  const auto& cfg = model->config();
  const auto size = image_size(first_frame);
  if (!init_box.finite() || !(init_box.area() > 0.0)) throw ParameterError("track_init: init box has no area");
  const double ix = std::min(init_box.right(), static_cast<double>(size.width)) - std::max(init_box.x, 0.0);
  const double iy = std::min(init_box.bottom(), static_cast<double>(size.height)) - std::max(init_box.y, 0.0);
  if (ix <= 0.0 || iy <= 0.0) throw ParameterError("track_init: init box lies outside the image");

  TrackerState st;
  st.model = std::move(model);
  st.image = size;
  const auto spec = template_spec(init_box, cfg.context_factor, cfg.template_size);
  NoGradGuard no_grad;
  st.template_tokens = st.model->embed_template(crop_square(first_frame, spec));
  const double side = cfg.template_size;
  const BBox in_template = clamp_box(image_to_crop(init_box, spec), side, side);
  const GridSize tgrid{cfg.template_grid(), cfg.template_grid()};
  const GridSize sgrid{cfg.search_grid(), cfg.search_grid()};
  st.ids = token_type_ids(tgrid, sgrid, in_template, cfg.patch);
  st.prev = init_box;
  st.last_valid = init_box;
  return st;
}

StepResult track_step(TrackerState& st, const Tensor& frame, const Refiner& refiner) {
  if (!st.model || !st.template_tokens.defined()) throw StateError("track_step: tracker not initialized");
  const auto& cfg = st.model->config();
  ++st.frame;
  StepResult result;
  result.box = st.prev;
  try {
    NoGradGuard no_grad;
    const auto spec = search_spec(st.prev, cfg.search_factor, cfg.search_size, st.last_valid);
    st.last_search = spec;
    const auto out = st.model->forward(st.template_tokens, st.ids.ids, crop_square(frame, spec));
    const auto candidates = decode_boxes(out, cfg.search_size);
    const auto best = select_best_index(candidates);
    const auto refined = postprocess(candidates[best].box, candidates[best].score, st, refiner);
    const BBox box = box_to_image(refined.box, spec, image_size(frame));
    if (!box.finite()) throw NumericError("track_step: non-finite box");
    result.box = box;
    result.score = candidates[best].score;
    result.refiner_warning = refined.warning;
  } catch (const NumericError&) {
    result.nonfinite = true;
    return result;
  }
  st.prev = result.box;
  if (result.box.area() > 0.0) st.last_valid = result.box;
  return result;
}

TrackRun track_video(std::shared_ptr<const TrackerModel> model, const std::vector<Tensor>& frames,
                     const BBox& init_box, const Refiner& refiner) {
  TrackRun run;
  if (frames.empty()) return run;
  auto state = track_init(std::move(model), frames.front(), init_box);
  run.boxes.push_back(init_box);
  for (std::size_t t = 1; t < frames.size(); ++t) {
    const auto r = track_step(state, frames[t], refiner);
    run.boxes.push_back(r.box);
    run.flagged_frames += r.nonfinite ? 1 : 0;
    run.refiner_warnings += r.refiner_warning ? 1 : 0;
  }
  return run;
}

}  // namespace lorat
