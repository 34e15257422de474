#include <gtest/gtest.h>

#include <random>

#include "lorat/embedding.hpp"
#include "lorat/errors.hpp"
#include "lorat/oracles.hpp"

namespace lorat {
namespace {

Tensor random_tensor(Shape shape, Rng& rng) { return Tensor::randn(std::move(shape), 1.0f, rng); }

TEST(PatchEmbed, IdentityProjectionReturnsPatch) {
  const Tensor image({1, 2, 2}, {1, 2, 3, 4});
  const Tensor eye({4, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
  const auto tokens = patch_embed(image, eye, 2);
  ASSERT_EQ(tokens.shape(), (Shape{1, 4}));
  EXPECT_EQ(std::vector<float>(tokens.data().begin(), tokens.data().end()), (std::vector<float>{1, 2, 3, 4}));
}

TEST(PatchEmbed, TokenCountForSearchRegion) {
  Rng rng(1);
  const auto tokens = patch_embed(Tensor::zeros({3, 224, 224}), random_tensor({768, 8}, rng), 16);
  EXPECT_EQ(tokens.dim(0), 196);
}

TEST(PatchEmbed, MatchesLoopExtraction) {
  Rng rng(2);
  const auto image = random_tensor({3, 8, 12}, rng);
  const auto proj = random_tensor({3 * 4 * 4, 5}, rng);
  const auto tokens = patch_embed(image, proj, 4);
  ASSERT_EQ(tokens.shape(), (Shape{6, 5}));
  for (int gi = 0; gi < 2; ++gi)
    for (int gj = 0; gj < 3; ++gj) {
      std::vector<float> patch;
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 4; ++y)
          for (int x = 0; x < 4; ++x) patch.push_back(image[(c * 8 + gi * 4 + y) * 12 + gj * 4 + x]);
      const auto ref = oracles::matmul(patch, proj.data(), 1, 48, 5);
      for (int d = 0; d < 5; ++d) EXPECT_NEAR(tokens[(gi * 3 + gj) * 5 + d], ref[d], 1e-5);
    }
}

TEST(PatchEmbed, NonDivisibleRejected) {
  EXPECT_THROW(patchify(Tensor::zeros({3, 10, 16}), 16), DimensionError);
}

TEST(TokenTypes, FullBoxAllForeground) {
  const auto ids = token_type_ids({7, 7}, {14, 14}, {0, 0, 112, 112}, 16);
  EXPECT_EQ(ids.foreground, 49);
  ASSERT_EQ(ids.ids.size(), 49u + 196u);
  for (std::size_t k = 49; k < ids.ids.size(); ++k) EXPECT_EQ(ids.ids[k], static_cast<int>(TokenType::Search));
}

TEST(TokenTypes, WorkedExample) {
  const auto ids = token_type_ids({7, 7}, {14, 14}, {32, 32, 48, 48}, 16);
  EXPECT_EQ(ids.foreground, 9);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      const bool inside = i >= 2 && i <= 4 && j >= 2 && j <= 4;
      EXPECT_EQ(ids.ids[i * 7 + j], static_cast<int>(inside ? TokenType::TemplateForeground : TokenType::TemplateBackground));
    }
}

TEST(TokenTypes, DegenerateBoxFlagged) {
  const auto ids = token_type_ids({7, 7}, {14, 14}, {40, 40, 0, 10}, 16);
  EXPECT_EQ(ids.foreground, 0);
  EXPECT_TRUE(ids.degenerate_box);
}

TEST(TokenTypes, OutsideTemplateRejected) {
  EXPECT_THROW(token_type_ids({7, 7}, {14, 14}, {100, 100, 40, 40}, 16), ParameterError);
}

TEST(TokenTypes, ForegroundGrowsWithBox) {
  int previous = 0;
  for (double side = 0; side <= 112; side += 4) {
    const auto ids = token_type_ids({7, 7}, {14, 14}, {56 - side / 2, 56 - side / 2, side, side}, 16);
    EXPECT_GE(ids.foreground, previous);
    previous = ids.foreground;
  }
  EXPECT_EQ(previous, 49);
}

class Resample : public ::testing::TestWithParam<PeStrategy> {};

TEST_P(Resample, IdentityOnSourceGrid) {
  Rng rng(3);
  const PositionalEmbedding pe(random_tensor({36, 8}, rng), {6, 6});
  const auto out = resample_positional(pe, {6, 6}, GetParam());
  for (std::size_t i = 0; i < out.data().size(); ++i) {
    if (GetParam() == PeStrategy::Slice) {
      EXPECT_EQ(out.data()[i], pe.q.data()[i]);
    } else {
      EXPECT_NEAR(out.data()[i], pe.q.data()[i], 1e-6);
    }
  }
}

TEST_P(Resample, ConstantStaysConstant) {
  const PositionalEmbedding pe(Tensor::full({196, 4}, 0.75f), {14, 14});
  const auto out = resample_positional(pe, {7, 7}, GetParam());
  for (float v : out.data()) EXPECT_NEAR(v, 0.75f, 1e-6);
}

INSTANTIATE_TEST_SUITE_P(Strategies, Resample, ::testing::Values(PeStrategy::Interpolate, PeStrategy::Slice));

TEST(Resample, InterpolateMatchesBilinearOracle) {
  Rng rng(4);
  const PositionalEmbedding pe(random_tensor({196, 6}, rng), {14, 14});
  for (GridSize t : {GridSize{7, 7}, GridSize{5, 9}, GridSize{20, 3}}) {
    const auto out = resample_positional(pe, t, PeStrategy::Interpolate);
    const auto ref = oracles::bilinear_align_corners(pe.q.data(), 14, 14, 6, t.h, t.w);
    ASSERT_EQ(out.data().size(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.data()[i], ref[i], 1e-6);
  }
}

TEST(Resample, SliceTakesTopLeft) {
  Rng rng(5);
  const PositionalEmbedding pe(random_tensor({16, 2}, rng), {4, 4});
  const auto out = resample_positional(pe, {2, 3}, PeStrategy::Slice);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      for (int d = 0; d < 2; ++d) EXPECT_EQ(out[(i * 3 + j) * 2 + d], pe.at(i, j)[d]);
}

TEST(Resample, SliceLargerThanSourceRejected) {
  const PositionalEmbedding pe(Tensor::zeros({16, 2}), {4, 4});
  EXPECT_THROW(resample_positional(pe, {5, 4}, PeStrategy::Slice), ParameterError);
}

TEST(Resample, GradientFlowsToTable) {
  Rng rng(6);
  PositionalEmbedding pe(random_tensor({16, 3}, rng), {4, 4});
  pe.q.set_requires_grad(true);
  backward(sum(resample_positional(pe, {3, 3}, PeStrategy::Interpolate)));
  double total = 0.0;
  for (float g : pe.q.grad()) total += g;
  EXPECT_NEAR(total, 27.0, 1e-4);  // each output row is a convex combination
}

TEST(Assemble, ZeroInputsGiveTypeRows) {
  Rng rng(7);
  const TokenTypeTable types(random_tensor({3, 4}, rng));
  const PositionalEmbedding pe(Tensor::zeros({4, 4}), {2, 2});
  const auto ids = token_type_ids({1, 1}, {2, 2}, {0, 0, 16, 16}, 16);
  const auto out = assemble_input(Tensor::zeros({1, 4}), {1, 1}, Tensor::zeros({4, 4}), pe, types, ids.ids,
                                  PeStrategy::Interpolate);
  ASSERT_EQ(out.shape(), (Shape{5, 4}));
  for (int r = 0; r < 5; ++r)
    for (int d = 0; d < 4; ++d) EXPECT_EQ(out[r * 4 + d], types.embeddings[ids.ids[r] * 4 + d]);
}

TEST(Assemble, SearchRowsUseNativeEmbedding) {
  Rng rng(8);
  const PositionalEmbedding pe(random_tensor({36, 4}, rng), {6, 6});
  const TokenTypeTable types(Tensor::zeros({3, 4}));
  const auto ids = token_type_ids({3, 3}, {6, 6}, {0, 0, 48, 48}, 16);
  const auto out = assemble_input(Tensor::zeros({9, 4}), {3, 3}, Tensor::zeros({36, 4}), pe, types, ids.ids,
                                  PeStrategy::Slice);
  for (int r = 0; r < 36; ++r)
    for (int d = 0; d < 4; ++d) EXPECT_EQ(out[(9 + r) * 4 + d], pe.q[r * 4 + d]);
}

TEST(Assemble, MatchesPerTokenLoop) {
  Rng rng(9);
  const PositionalEmbedding pe(random_tensor({36, 5}, rng), {6, 6});
  const TokenTypeTable types(random_tensor({3, 5}, rng));
  const auto z = random_tensor({9, 5}, rng);
  const auto x = random_tensor({36, 5}, rng);
  const auto ids = token_type_ids({3, 3}, {6, 6}, {10, 10, 20, 20}, 16);
  const auto out = assemble_input(z, {3, 3}, x, pe, types, ids.ids, PeStrategy::Interpolate);
  const auto zpe = oracles::bilinear_align_corners(pe.q.data(), 6, 6, 5, 3, 3);
  for (int r = 0; r < 45; ++r)
    for (int d = 0; d < 5; ++d) {
      const float token = r < 9 ? z[r * 5 + d] : x[(r - 9) * 5 + d];
      const float pos = r < 9 ? zpe[static_cast<std::size_t>(r * 5 + d)] : pe.q[(r - 9) * 5 + d];
      EXPECT_NEAR(out[r * 5 + d], token + pos + types.embeddings[ids.ids[r] * 5 + d], 1e-6);
    }
}

TEST(Assemble, SearchSwapChangesOnlySearchRows) {
  Rng rng(10);
  const PositionalEmbedding pe(random_tensor({36, 4}, rng), {6, 6});
  const TokenTypeTable types(random_tensor({3, 4}, rng));
  const auto z = random_tensor({9, 4}, rng);
  const auto ids = token_type_ids({3, 3}, {6, 6}, {8, 8, 30, 30}, 16);
  const auto a = assemble_input(z, {3, 3}, random_tensor({36, 4}, rng), pe, types, ids.ids, PeStrategy::Interpolate);
  const auto b = assemble_input(z, {3, 3}, random_tensor({36, 4}, rng), pe, types, ids.ids, PeStrategy::Interpolate);
  for (int k = 0; k < 9 * 4; ++k) EXPECT_EQ(a[k], b[k]);
}

TEST(Assemble, GridMismatchRejected) {
  const PositionalEmbedding pe(Tensor::zeros({36, 4}), {6, 6});
  const TokenTypeTable types(Tensor::zeros({3, 4}));
  const std::vector<int> ids(9 + 16, 2);
  EXPECT_THROW(assemble_input(Tensor::zeros({9, 4}), {3, 3}, Tensor::zeros({16, 4}), pe, types, ids,
                              PeStrategy::Interpolate),
               DimensionError);
}

}  // namespace
}  // namespace lorat
