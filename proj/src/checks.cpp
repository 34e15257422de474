#include "lorat/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "lorat/benchmark.hpp"
#include "lorat/finetune.hpp"
#include "lorat/kernels.hpp"
#include "lorat/oracles.hpp"
#include "lorat/pipeline.hpp"
#include "lorat/synthetic.hpp"

namespace lorat::checks {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

template <typename F>
CheckResult timed(int id, std::string name, F&& body) {
  CheckResult r{id, std::move(name), false, {}, 0.0};
  const auto t0 = Clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

/// Redraws adapter factors so that B·A is nonzero. A stddev of 0 keeps that factor as it is.
void randomize_adapters(TrackerModel& m, Rng& rng, float a_std, float b_std) {
  auto redraw = [&rng](Tensor& t, float stddev) {
    if (stddev <= 0.0f) return;
    std::normal_distribution<float> dist(0.0f, stddev);
    for (auto& v : t.mutable_data()) v = dist(rng);
  };
  for_each_linear(m.encoder, [&](const std::string&, LoraLinear& l) {
    redraw(l.lora_a, a_std);
    redraw(l.lora_b, b_std);
  });
}

std::vector<Video> learning_videos() {
  return synthetic_dataset(20, 30, 128, {Motion::Linear, Motion::Sinusoidal}, 7);
}

}  // namespace

CheckResult merge_equivalence() {
  return timed(1, "LoRA merge equivalence and zero inference overhead", [](CheckResult& r) {
    const auto cfg = preset_config("tiny96");
    const auto base = TrackerModel::create(cfg);
    auto adapted = base.with_lora(cfg.lora_rank, cfg.lora_alpha, 11);
    Rng rng(12);
    randomize_adapters(adapted, rng, 0.0f, 0.1f);
    const auto merged = adapted.merged();

    NoGradGuard no_grad;
    double worst = 0.0;
    constexpr int kInputs = 100;
    for (int i = 0; i < kInputs; ++i) {
      const auto seq = Tensor::randn({cfg.sequence_length(), cfg.dim}, 1.0f, rng);
      const auto a = encoder_forward(seq, adapted.encoder, cfg).all_tokens;
      const auto b = encoder_forward(seq, merged.encoder, cfg).all_tokens;
      for (std::int64_t k = 0; k < a.numel(); ++k) worst = std::max(worst, std::fabs(static_cast<double>(a[k]) - b[k]));
    }

    const auto seq = Tensor::randn({cfg.sequence_length(), cfg.dim}, 1.0f, rng);
    kernels::reset_multiply_count();
    (void)encoder_forward(seq, base.encoder, cfg);
    const auto base_count = kernels::multiply_count();
    kernels::reset_multiply_count();
    (void)encoder_forward(seq, merged.encoder, cfg);
    const auto merged_count = kernels::multiply_count();
    kernels::reset_multiply_count();
    (void)encoder_forward(seq, adapted.encoder, cfg);
    const auto unmerged_count = kernels::multiply_count();

    r.passed = worst < 1e-5 && base_count == merged_count && unmerged_count > base_count;
    r.detail = fmt("max |merged-unmerged| = %.3g over 100 inputs; multiplies base %.0f, merged %.0f", worst,
                   static_cast<double>(base_count), static_cast<double>(merged_count)) +
               fmt(", unmerged %.0f", static_cast<double>(unmerged_count));
  });
}

CheckResult zero_init_neutrality() {
  return timed(2, "LoRA zero-init neutrality", [](CheckResult& r) {
    const auto cfg = preset_config("tiny96");
    SyntheticConfig sc;
    sc.frames = 20;
    sc.motion = Motion::Linear;
    sc.seed = 3;
    const auto video = generate_synthetic(sc);
    auto base = std::make_shared<const TrackerModel>(TrackerModel::create(cfg));
    const auto wrapped = base->with_lora(cfg.lora_rank, cfg.lora_alpha, 5);
    auto deployed = std::make_shared<const TrackerModel>(wrapped.merged());

    const auto a = track_video(base, video.frames, video.record.init_box()).boxes;
    const auto b = track_video(deployed, video.frames, video.record.init_box()).boxes;

    // The unmerged forward must also match the base forward bit for bit.
    NoGradGuard no_grad;
    auto state = track_init(base, video.frames[0], video.record.init_box());
    const auto spec = search_spec(video.record.gt_boxes[0], cfg.search_factor, cfg.search_size);
    const auto crop = crop_square(video.frames[1], spec);
    const auto fb = base->forward(state.template_tokens, state.ids.ids, crop);
    const auto fw = wrapped.forward(state.template_tokens, state.ids.ids, crop);
    const bool forward_equal = std::ranges::equal(fb.scores.data(), fw.scores.data()) &&
                               std::ranges::equal(fb.regs.data(), fw.regs.data());

    r.passed = a == b && a.size() == 20 && forward_equal;
    r.detail = std::string("20-frame predictions ") + (a == b ? "bit-identical" : "DIFFER") +
               "; unmerged forward " + (forward_equal ? "bit-identical" : "DIFFERS");
  });
}

CheckResult freeze_discipline() {
  return timed(3, "Freeze discipline over 50 finetune steps", [](CheckResult& r) {
    const auto cfg = preset_config("tiny96");
    auto model = TrackerModel::create(cfg).with_lora(cfg.lora_rank, cfg.lora_alpha, 1);
    std::map<std::string, std::uint64_t> before;
    std::set<std::string> trainable;
    for (const auto& p : model.parameters()) before[p.name] = checksum(p.tensor);
    for (const auto& p : model.trainable_parameters()) trainable.insert(p.name);

    const auto videos = synthetic_dataset(4, 8, 128, {Motion::Linear, Motion::Sinusoidal}, 21);
    FinetuneOptions opt;
    opt.steps = 50;
    opt.batch = 2;
    opt.seed = 4;
    finetune(model, videos, opt);

    int frozen_changed = 0, trainable_unchanged = 0, frozen = 0;
    for (const auto& p : model.parameters()) {
      const bool changed = checksum(p.tensor) != before.at(p.name);
      if (trainable.count(p.name)) {
        trainable_unchanged += changed ? 0 : 1;
      } else {
        ++frozen;
        frozen_changed += changed ? 1 : 0;
      }
    }
    bool names_ok = true;
    for (const auto& name : trainable) {
      const bool allowed = name.ends_with(".lora_a") || name.ends_with(".lora_b") || name.starts_with("head.") ||
                           name == "pos_embed" || name == "token_type";
      names_ok = names_ok && allowed;
    }
    r.passed = frozen_changed == 0 && trainable_unchanged == 0 && names_ok;
    r.detail = fmt("%.0f frozen tensors, %.0f changed; ", frozen, frozen_changed) +
               fmt("%.0f trainable tensors, %.0f unchanged", static_cast<double>(trainable.size()),
                   trainable_unchanged) +
               (names_ok ? "" : "; a non-adapter/head/table tensor is trainable");
  });
}

CheckResult gradient_correctness() {
  return timed(4, "Analytic gradients match central differences", [](CheckResult& r) {
    const auto cfg = preset_config("tiny96");
    auto model = TrackerModel::create(cfg).with_lora(cfg.lora_rank, cfg.lora_alpha, 2);
    Rng rng(9);
    randomize_adapters(model, rng, 0.05f, 0.05f);

    SyntheticConfig sc;
    sc.frames = 3;
    sc.seed = 17;
    const auto video = generate_synthetic(sc);
    auto deployed = std::make_shared<const TrackerModel>(model.merged());
    const auto state = track_init(deployed, video.frames[0], video.record.init_box());
    const auto spec = search_spec(video.record.gt_boxes[1], cfg.search_factor, cfg.search_size);
    const auto crop = crop_square(video.frames[1], spec);
    BBox target = image_to_crop(video.record.gt_boxes[2], spec);
    target.x += 3.0;  // keep the L1 residuals away from their kinks

    auto loss_value = [&] {
      return head_loss(model.forward(state.template_tokens, state.ids.ids, crop), target, cfg.search_size, 5.0f).total;
    };
    auto params = model.trainable_parameters();
    for (auto& p : params) p.tensor.zero_grad();
    backward(loss_value());

    // f32 losses leave central differences at h = 1e-3 close to their rounding floor.
    constexpr float kStep = 1e-2f;
    constexpr int kSamples = 16;
    std::vector<float> all_analytic, all_numeric;
    double worst = 0.0;
    std::string worst_name;
    int resolved = 0;
    for (auto& p : params) {
      std::vector<std::int64_t> idx(static_cast<std::size_t>(p.tensor.numel()));
      std::iota(idx.begin(), idx.end(), 0);
      // The entries with the largest analytic gradients plus a random sample.
      const auto g = p.tensor.grad();
      const auto top = std::min<std::ptrdiff_t>(kSamples / 2, std::ssize(idx));
      std::ranges::partial_sort(idx, idx.begin() + top, [&](auto a, auto b) {
        return std::fabs(g[static_cast<std::size_t>(a)]) > std::fabs(g[static_cast<std::size_t>(b)]);
      });
      std::vector<std::int64_t> chosen(idx.begin(), idx.begin() + top);
      std::shuffle(idx.begin() + top, idx.end(), rng);
      for (auto it = idx.begin() + top; it != idx.end() && std::ssize(chosen) < kSamples; ++it) chosen.push_back(*it);

      const auto fd = finite_difference_gradient([&](const Tensor&) { return loss_value().item(); }, p.tensor, kStep,
                                                 chosen);
      std::vector<float> a, b;
      for (auto i : chosen) {
        a.push_back(g[static_cast<std::size_t>(i)]);
        b.push_back(fd[i]);
      }
      all_analytic.insert(all_analytic.end(), a.begin(), a.end());
      all_numeric.insert(all_numeric.end(), b.begin(), b.end());
      const double err = relative_error(a, b);
      resolved += err < 1e-3 ? 1 : 0;
      if (err > worst) {
        worst = err;
        worst_name = p.name;
      }
    }
    const double global = relative_error(all_analytic, all_numeric);
    r.passed = global < 1e-3;
    r.detail = fmt("relative error %.3g over %.0f sampled entries of %.0f tensors; ", global,
                   static_cast<double>(all_analytic.size()), static_cast<double>(params.size())) +
               fmt("%.0f tensors individually < 1e-3, worst %.3g", resolved, worst) + " (" + worst_name + ")";
  });
}

CheckResult positional_reuse() {
  return timed(5, "Positional embedding reuse across resolutions", [](CheckResult& r) {
    Rng rng(5);
    const GridSize src{14, 14};
    constexpr int kDim = 32;
    const PositionalEmbedding pe(Tensor::randn({src.count(), kDim}, 1.0f, rng), src);

    const auto slice_id = resample_positional(pe, src, PeStrategy::Slice);
    const auto interp_id = resample_positional(pe, src, PeStrategy::Interpolate);
    const bool slice_exact = std::ranges::equal(slice_id.data(), pe.q.data());
    double interp_err = 0.0;
    for (std::size_t i = 0; i < interp_id.data().size(); ++i)
      interp_err = std::max(interp_err, std::fabs(static_cast<double>(interp_id.data()[i]) - pe.q.data()[i]));

    bool bounded = true;
    for (const GridSize target : {GridSize{7, 7}, GridSize{3, 5}, GridSize{20, 9}, GridSize{1, 1}}) {
      const auto out = resample_positional(pe, target, PeStrategy::Interpolate);
      for (int c = 0; c < kDim; ++c) {
        float lo = pe.q.data()[static_cast<std::size_t>(c)], hi = lo;
        for (int t = 0; t < src.count(); ++t) {
          lo = std::min(lo, pe.q.data()[static_cast<std::size_t>(t * kDim + c)]);
          hi = std::max(hi, pe.q.data()[static_cast<std::size_t>(t * kDim + c)]);
        }
        for (int t = 0; t < target.count(); ++t) {
          const float v = out.data()[static_cast<std::size_t>(t * kDim + c)];
          bounded = bounded && v >= lo && v <= hi;
        }
      }
    }

    const auto down = resample_positional(pe, {7, 7}, PeStrategy::Interpolate);
    const auto oracle = oracles::bilinear_align_corners(pe.q.data(), 14, 14, kDim, 7, 7);
    double oracle_err = 0.0;
    for (std::size_t i = 0; i < oracle.size(); ++i)
      oracle_err = std::max(oracle_err, std::fabs(static_cast<double>(down.data()[i]) - oracle[i]));

    r.passed = slice_exact && interp_err < 1e-6 && bounded && oracle_err < 1e-6;
    r.detail = std::string("slice identity ") + (slice_exact ? "bitwise" : "BROKEN") +
               fmt("; interpolate identity err %.3g; 14x14->7x7 oracle err %.3g", interp_err, oracle_err) +
               (bounded ? "; outputs within source range" : "; OUT OF SOURCE RANGE");
  });
}

CheckResult token_type_annotation() {
  return timed(6, "Template foreground/background annotation", [](CheckResult& r) {
    const GridSize tgrid{7, 7}, sgrid{14, 14};
    const auto worked = token_type_ids(tgrid, sgrid, {32, 32, 48, 48}, 16);
    bool cells_ok = true;
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j) {
        const bool fg = worked.ids[static_cast<std::size_t>(i * 7 + j)] == static_cast<int>(TokenType::TemplateForeground);
        cells_ok = cells_ok && fg == (i >= 2 && i <= 4 && j >= 2 && j <= 4);
      }

    Rng rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const double side = 112.0;
      const double x = u(rng) * side, y = u(rng) * side;
      const double w = u(rng) * (side - x), h = u(rng) * (side - y);
      const BBox inner{x, y, w, h};
      // Grow each edge outward by a random amount, staying inside the template.
      const double gl = u(rng) * x, gt = u(rng) * y;
      const BBox outer{x - gl, y - gt, w + gl + u(rng) * (side - x - w), h + gt + u(rng) * (side - y - h)};
      const auto a = token_type_ids(tgrid, sgrid, inner, 16);
      const auto b = token_type_ids(tgrid, sgrid, outer, 16);
      bool nested = a.foreground <= b.foreground;
      for (std::size_t k = 0; k < 49; ++k) {
        if (a.ids[k] == static_cast<int>(TokenType::TemplateForeground))
          nested = nested && b.ids[k] == static_cast<int>(TokenType::TemplateForeground);
      }
      violations += nested ? 0 : 1;
    }
    r.passed = worked.foreground == 9 && cells_ok && violations == 0;
    r.detail = fmt("worked example: %.0f foreground tokens; nested-box violations: %.0f / 1000",
                   worked.foreground, violations);
  });
}

CheckResult head_decoding() {
  return timed(7, "Anchor-free decoding and best-box selection", [](CheckResult& r) {
    Rng rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const GridSize grid{14, 14};
    const double side = 224.0;
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const int i = static_cast<int>(u(rng) * 14), j = static_cast<int>(u(rng) * 14);
      const auto [cx, cy] = cell_center(i, j, grid, side);
      const BBox box{cx - 1 - 60 * u(rng), cy - 1 - 60 * u(rng), 0, 0};
      const BBox full{box.x, box.y, (cx - box.x) + 1 + 60 * u(rng), (cy - box.y) + 1 + 60 * u(rng)};
      const auto enc = encode_box(full, i, j, grid, side);
      std::vector<float> regs(static_cast<std::size_t>(grid.count() * 4), 0.0f);
      const auto cell = static_cast<std::size_t>(i * grid.w + j);
      for (std::size_t k = 0; k < 4; ++k) regs[cell * 4 + k] = static_cast<float>(enc[k]);
      const HeadOutput out{Tensor::zeros({14, 14}), Tensor({14, 14, 4}, regs), grid};
      const auto decoded = decode_boxes(out, side)[cell].box;
      const auto re = encode_box(decoded, i, j, grid, side);
      for (std::size_t k = 0; k < 4; ++k) worst = std::max(worst, std::fabs(re[k] - static_cast<float>(enc[k])));
    }

    int changed = 0;
    std::normal_distribution<float> n01(0.0f, 1.0f);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<Candidate> cands(36);
      for (auto& c : cands) c.score = std::clamp(n01(rng), -3.0f, 3.0f);
      const auto before = select_best_index(cands);
      const float a = static_cast<float>(0.5 + 2.0 * u(rng));
      const float b = static_cast<float>(4.0 * u(rng) - 2.0);
      const int kind = trial % 4;
      for (auto& c : cands) {
        const float s = c.score;
        switch (kind) {
          case 0: c.score = a * s + b; break;
          case 1: c.score = std::exp(a * s); break;
          case 2: c.score = s * s * s + a * s; break;
          default: c.score = 1.0f / (1.0f + std::exp(-a * s)) + b; break;
        }
      }
      changed += select_best_index(cands) == before ? 0 : 1;
    }
    r.passed = worst < 1e-5 && changed == 0;
    r.detail = fmt("round-trip max |dltrb| = %.3g over 1000 boxes; argmax changed in %.0f / 100 monotone transforms",
                   worst, changed);
  });
}

CheckResult metric_oracle() {
  return timed(8, "IoU metric and averaging against brute force", [](CheckResult& r) {
    Rng rng(8);
    std::uniform_int_distribution<int> coord(0, 63);
    int mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      auto box = [&] {
        const int x = coord(rng), y = coord(rng);
        std::uniform_int_distribution<int> wd(0, 64 - x), hd(0, 64 - y);
        return BBox{static_cast<double>(x), static_cast<double>(y), static_cast<double>(wd(rng)),
                    static_cast<double>(hd(rng))};
      };
      const auto a = box(), b = box();
      mismatches += iou(a, b) == oracles::pixel_count_iou(a, b, 64) ? 0 : 1;
    }

    std::vector<TrackRecord> records;
    Predictions preds;
    std::uniform_real_distribution<double> u(0.0, 50.0);
    for (int t = 0; t < 5; ++t) {
      TrackRecord rec{"track" + std::to_string(t), "", {}};
      std::vector<BBox> p;
      const int frames = 3 + t * 2;
      for (int f = 0; f < frames; ++f) {
        rec.gt_boxes.push_back({u(rng), u(rng), 1 + u(rng), 1 + u(rng)});
        p.push_back({u(rng), u(rng), 1 + u(rng), 1 + u(rng)});
      }
      records.push_back(rec);
      preds.push_back(p);
    }
    const double diff = std::fabs(average_iou(records, preds).average_iou - oracles::flat_average_iou(records, preds));

    SyntheticConfig still;
    still.motion = Motion::Static;
    still.frames = 10;
    const auto static_video = generate_synthetic(still);
    const double static_score = average_iou({static_video.record}, dummy_static({static_video.record})).average_iou;

    // Target jumps by its own width at frame 1 and stays there: both scored frames have IoU 0.
    const BBox start{10, 10, 20, 20};
    const BBox moved{30, 10, 20, 20};
    const TrackRecord jump{"jump", "", {start, moved, moved}};
    const double jump_score = average_iou({jump}, dummy_static({jump})).average_iou;

    r.passed = mismatches == 0 && diff < 1e-12 && static_score == 1.0 && jump_score == 0.0;
    r.detail = fmt("pixel-count mismatches %.0f / 1000; |avg - flat| = %.3g; ", mismatches, diff) +
               fmt("dummy-static static %.6f, translate-by-width %.6f", static_score, jump_score);
  });
}

CheckResult learning_result() {
  return timed(9, "Desk-scale finetune reaches train-set IoU 0.8", [](CheckResult& r) {
    const auto cfg = preset_config("tiny96");
    auto model = TrackerModel::create(cfg).with_lora(8, cfg.lora_alpha, 1);
    const auto videos = learning_videos();
    FinetuneOptions opt;
    opt.steps = 2000;
    opt.batch = 16;
    opt.lr = 2e-3f;
    opt.eval_every = 100;
    opt.target_iou = 0.8;
    const auto t0 = Clock::now();
    const auto result = finetune(model, videos, opt);
    const double minutes = std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
    const double best = result.evaluations.empty() ? 0.0 : result.evaluations.back().second;
    r.passed = result.reached_target && result.steps_run <= 2000 && minutes < 15.0;
    r.detail = fmt("train-set average IoU %.4f after %.0f steps in %.1f min", best, result.steps_run, minutes);
  });
}

CheckResult determinism() {
  return timed(10, "Benchmark reports independent of worker count", [](CheckResult& r) {
    const auto cfg = preset_config("tiny96");
    auto model = TrackerModel::create(cfg).with_lora(cfg.lora_rank, cfg.lora_alpha, 3);
    Rng rng(10);
    randomize_adapters(model, rng, 0.05f, 0.05f);
    auto deployed = std::make_shared<const TrackerModel>(model.merged());
    const auto videos = synthetic_dataset(6, 12, 128, {Motion::Linear, Motion::Sinusoidal, Motion::Static}, 33);
    const std::vector<Method> methods{dummy_static_method(), tracker_method("lorat", deployed)};
    const std::string fingerprint = "determinism-check";
    const auto one = run_benchmark(methods, videos, 1, fingerprint);
    const auto eight = run_benchmark(methods, videos, 8, fingerprint);
    const auto again = run_benchmark(methods, videos, 8, fingerprint);
    const bool same = one.json() == eight.json() && one.text() == eight.text() && eight.json() == again.json();
    r.passed = same;
    r.detail = std::string("workers 1 vs 8 vs 8 (repeat): ") + (same ? "bit-identical" : "DIFFERENT");
  });
}

std::vector<CheckResult> run_suite(const SuiteOptions& options, const std::function<void(const CheckResult&)>& on_result) {
  std::vector<std::function<CheckResult()>> checks{merge_equivalence, zero_init_neutrality, freeze_discipline,
                                                   gradient_correctness, positional_reuse, token_type_annotation,
                                                   head_decoding, metric_oracle};
  if (options.include_learning) checks.emplace_back(learning_result);
  checks.emplace_back(determinism);
  std::vector<CheckResult> out;
  for (const auto& check : checks) {
    out.push_back(check());
    if (on_result) on_result(out.back());
  }
  return out;
}

std::string format_result(const CheckResult& r) {
  char head[128];
  std::snprintf(head, sizeof head, "[%s] %2d %-52s (%.2fs) ", r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(),
                r.seconds);
  return std::string(head) + r.detail;
}

}  // namespace lorat::checks
