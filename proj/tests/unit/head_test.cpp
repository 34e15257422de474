#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lorat/errors.hpp"
#include "lorat/head.hpp"

namespace lorat {
namespace {

void zero_layers(std::array<Linear, 3>& layers) {
  for (auto& l : layers) {
    for (auto& v : l.weight.mutable_data()) v = 0.0f;
    for (auto& v : l.bias.mutable_data()) v = 0.0f;
  }
}

HeadOutput output_with(GridSize grid, const std::vector<float>& regs) {
  return {Tensor::zeros({grid.h, grid.w}), Tensor({grid.h, grid.w, 4}, regs), grid};
}

TEST(HeadForward, ZeroParamsGiveConstants) {
  Rng rng(1);
  auto head = make_head(8, 16, rng);
  zero_layers(head.cls);
  zero_layers(head.reg);
  const auto out = head_forward(Tensor::randn({3, 3, 8}, 1.0f, rng), head);
  for (float s : out.scores.data()) EXPECT_EQ(s, 0.0f);
  for (float r : out.regs.data()) EXPECT_NEAR(r, std::log(2.0f), 1e-7);
}

TEST(HeadForward, CellsAreIndependent) {
  Rng rng(2);
  const auto head = make_head(8, 16, rng);
  const auto feats = Tensor::randn({2, 3, 8}, 1.0f, rng);
  std::vector<float> swapped(feats.data().begin(), feats.data().end());
  std::swap_ranges(swapped.begin(), swapped.begin() + 8, swapped.begin() + 5 * 8);
  const auto a = head_forward(feats, head);
  const auto b = head_forward(Tensor({2, 3, 8}, swapped), head);
  EXPECT_EQ(a.scores[0], b.scores[5]);
  EXPECT_EQ(a.scores[5], b.scores[0]);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(a.regs[k], b.regs[20 + k]);
  for (int c = 1; c < 5; ++c) EXPECT_EQ(a.scores[c], b.scores[c]);
}

TEST(HeadForward, MatchesScalarOracle) {
  Rng rng(3);
  const auto head = make_head(4, 5, rng);
  const auto feats = Tensor::randn({2, 2, 4}, 1.0f, rng);
  const auto out = head_forward(feats, head);
  auto mlp = [](std::vector<double> x, const std::array<Linear, 3>& layers) {
    for (std::size_t li = 0; li < 3; ++li) {
      const auto& l = layers[li];
      const auto o = static_cast<std::size_t>(l.out_features()), in = static_cast<std::size_t>(l.in_features());
      std::vector<double> y(o);
      for (std::size_t r = 0; r < o; ++r) {
        y[r] = l.bias.data()[r];
        for (std::size_t c = 0; c < in; ++c) y[r] += l.weight.data()[r * in + c] * x[c];
        if (li < 2) y[r] = 0.5 * y[r] * (1 + std::tanh(std::sqrt(2 / M_PI) * (y[r] + 0.044715 * std::pow(y[r], 3))));
      }
      x = y;
    }
    return x;
  };
  for (int cell = 0; cell < 4; ++cell) {
    std::vector<double> f(feats.data().begin() + cell * 4, feats.data().begin() + cell * 4 + 4);
    EXPECT_NEAR(out.scores[cell], mlp(f, head.cls)[0], 1e-5);
    const auto reg = mlp(f, head.reg);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(out.regs[cell * 4 + k], std::log1p(std::exp(reg[static_cast<std::size_t>(k)])), 1e-5);
  }
}

TEST(HeadForward, WidthMismatchRejected) {
  Rng rng(4);
  const auto head = make_head(8, 16, rng);
  EXPECT_THROW(head_forward(Tensor::zeros({2, 2, 6}), head), ConfigError);
}

TEST(Decode, ZeroDistancesGiveDegenerateBoxAtCenter) {
  const GridSize grid{14, 14};
  const auto cands = decode_boxes(output_with(grid, std::vector<float>(14 * 14 * 4, 0.0f)), 224);
  ASSERT_EQ(cands.size(), 196u);
  const auto& box = cands[7 * 14 + 7].box;
  EXPECT_DOUBLE_EQ(box.x, 120);  // center of cell (7, 7) is (120, 120)
  EXPECT_DOUBLE_EQ(box.w, 0);
  const auto [cx, cy] = cell_center(6, 6, grid, 224);
  EXPECT_DOUBLE_EQ(cx, 104);
  EXPECT_DOUBLE_EQ(cy, 104);
}

TEST(Decode, QuarterDistances) {
  // A 2×2 grid on a 224 crop puts cell (1, 1) at (168, 168); use a 1-cell grid to hit (112, 112).
  const GridSize grid{1, 1};
  const auto cands = decode_boxes(output_with(grid, {0.25f, 0.25f, 0.25f, 0.25f}), 224);
  EXPECT_EQ(cands[0].box, (BBox{56, 56, 112, 112}));
}

TEST(Decode, RoundTrip) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const GridSize grid{6, 6};
  for (int trial = 0; trial < 200; ++trial) {
    const int i = static_cast<int>(u(rng) * 6), j = static_cast<int>(u(rng) * 6);
    const auto [cx, cy] = cell_center(i, j, grid, 96);
    const double l = 1 + 30 * u(rng), t = 1 + 30 * u(rng);
    const BBox box{cx - l, cy - t, l + 1 + 30 * u(rng), t + 1 + 30 * u(rng)};
    const auto enc = encode_box(box, i, j, grid, 96);
    std::vector<float> regs(36 * 4, 0.0f);
    for (int k = 0; k < 4; ++k) regs[static_cast<std::size_t>((i * 6 + j) * 4 + k)] = static_cast<float>(enc[static_cast<std::size_t>(k)]);
    const auto decoded = decode_boxes(output_with(grid, regs), 96)[static_cast<std::size_t>(i * 6 + j)].box;
    const auto again = encode_box(decoded, i, j, grid, 96);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(again[k], static_cast<float>(enc[k]), 1e-5);
  }
}

TEST(Select, SingleCandidate) {
  const std::vector<Candidate> c{{{1, 2, 3, 4}, -5.0f}};
  EXPECT_EQ(select_best(c), (BBox{1, 2, 3, 4}));
}

TEST(Select, PicksHighestScore) {
  const std::vector<Candidate> c{{{0, 0, 1, 1}, 0.1f}, {{1, 1, 1, 1}, 0.9f}, {{2, 2, 1, 1}, 0.3f}};
  EXPECT_EQ(select_best_index(c), 1u);
}

TEST(Select, TiesGoToLowestIndex) {
  const std::vector<Candidate> c{{{0, 0, 1, 1}, 0.2f}, {{1, 1, 1, 1}, 0.7f}, {{2, 2, 1, 1}, 0.7f}};
  EXPECT_EQ(select_best_index(c), 1u);
}

TEST(Select, EmptyRejected) {
  EXPECT_THROW(select_best(std::vector<Candidate>{}), ContractError);
}

TEST(Select, InvariantUnderMonotoneMaps) {
  Rng rng(6);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Candidate> c(20);
    for (auto& e : c) e.score = n(rng);
    const auto before = select_best_index(c);
    for (auto& e : c) e.score = std::tanh(e.score) * 3.0f - 1.0f;
    EXPECT_EQ(select_best_index(c), before);
  }
}

TEST(Loss, PerfectPredictionHasNoRegressionLoss) {
  const GridSize grid{6, 6};
  const BBox target{30, 30, 30, 30};  // contains the centers of cells (2..3, 2..3)
  const auto [pi, pj] = cell_of_point(target.cx(), target.cy(), grid, 96);
  EXPECT_EQ(pi, 2);
  EXPECT_EQ(pj, 2);
  std::vector<float> regs(36 * 4, 0.5f);
  for (auto [i, j] : {std::array{2, 2}, std::array{2, 3}, std::array{3, 2}, std::array{3, 3}}) {
    const auto enc = encode_box(target, i, j, grid, 96);
    for (int k = 0; k < 4; ++k) regs[static_cast<std::size_t>((i * 6 + j) * 4 + k)] = static_cast<float>(enc[static_cast<std::size_t>(k)]);
  }
  const auto parts = head_loss(output_with(grid, regs), target, 96, 5.0f);
  EXPECT_NEAR(parts.regression, 0.0f, 1e-6);
  EXPECT_NEAR(parts.classification, std::log(2.0f), 1e-6);

  regs[(3 * 6 + 3) * 4] += 0.4f;  // off-center positive cell
  EXPECT_NEAR(head_loss(output_with(grid, regs), target, 96, 5.0f).regression, 0.1f, 1e-6);
}

TEST(Loss, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  auto head = make_head(8, 12, rng);
  const auto feats = Tensor::randn({3, 3, 8}, 1.0f, rng);
  const BBox target{20, 18, 30, 25};
  auto loss = [&] { return head_loss(head_forward(feats, head), target, 48, 5.0f).total; };
  std::vector<Tensor*> params;
  for (auto* layers : {&head.cls, &head.reg})
    for (auto& l : *layers) {
      l.weight.set_requires_grad(true);
      l.bias.set_requires_grad(true);
      params.push_back(&l.weight);
      params.push_back(&l.bias);
    }
  backward(loss());
  for (auto* p : params) {
    const std::vector<float> analytic(p->grad().begin(), p->grad().end());
    // The loss sits near 10, so f32 rounding swamps differences taken at h = 1e-3.
    const auto numeric = finite_difference_gradient([&](const Tensor&) { return loss().item(); }, *p, 1e-2f);
    EXPECT_LT(relative_error(analytic, numeric.data()), 1e-3);
  }
}

}  // namespace
}  // namespace lorat
