#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lorat/encoder.hpp"
#include "lorat/errors.hpp"
#include "lorat/kernels.hpp"
#include "lorat/model.hpp"
#include "lorat/optim.hpp"

namespace lorat {
namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(static_cast<std::size_t>(t.dim(0)), std::vector<double>(static_cast<std::size_t>(t.dim(1))));
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j) m[i][j] = t.data()[i * m[i].size() + j];
  return m;
}

// y = x Wᵀ + b for a plain layer.
Mat affine(const Mat& x, const Linear& l) {
  const auto w = to_mat(l.weight);
  Mat y(x.size(), std::vector<double>(w.size()));
  for (std::size_t n = 0; n < x.size(); ++n)
    for (std::size_t o = 0; o < w.size(); ++o) {
      double s = l.bias.data()[o];
      for (std::size_t i = 0; i < x[n].size(); ++i) s += x[n][i] * w[o][i];
      y[n][o] = s;
    }
  return y;
}

Mat norm(const Mat& x, const Tensor& g, const Tensor& b, double eps) {
  Mat y = x;
  for (auto& row : y) {
    double mean = 0, var = 0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(row.size());
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = (row[i] - mean) / std::sqrt(var + eps) * g[i] + b[i];
  }
  return y;
}

// Single-head pre-norm block evaluated in double precision.
Mat block_oracle(const Mat& x, const BlockParams& p, double eps) {
  const auto h = norm(x, p.ln1_gamma, p.ln1_beta, eps);
  const auto q = affine(h, p.q.base), k = affine(h, p.k.base), v = affine(h, p.v.base);
  const std::size_t n = x.size(), d = x[0].size();
  Mat attn(n, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(n);
    double mx = -1e300, z = 0;
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t c = 0; c < d; ++c) s[j] += q[i][c] * k[j][c];
      s[j] /= std::sqrt(static_cast<double>(d));
      mx = std::max(mx, s[j]);
    }
    for (auto& e : s) z += (e = std::exp(e - mx));
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) attn[i][c] += s[j] / z * v[j][c];
  }
  auto x1 = affine(attn, p.o.base);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) x1[i][c] += x[i][c];
  auto f = affine(norm(x1, p.ln2_gamma, p.ln2_beta, eps), p.fc1.base);
  for (auto& row : f)
    for (auto& e : row) e = 0.5 * e * (1 + std::tanh(std::sqrt(2 / M_PI) * (e + 0.044715 * e * e * e)));
  auto out = affine(f, p.fc2.base);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) out[i][c] += x1[i][c];
  return out;
}

TEST(Block, ZeroWeightsPassThrough) {
  Rng rng(1);
  auto p = make_block(8, 4, rng);
  for (LoraLinear* l : {&p.q, &p.k, &p.v, &p.o, &p.fc1, &p.fc2}) {
    for (auto& v : l->base.weight.mutable_data()) v = 0.0f;
    for (auto& v : l->base.bias.mutable_data()) v = 0.0f;
  }
  const auto x = Tensor::randn({5, 8}, 1.0f, rng);
  const auto y = block_forward(x, p, 2, 1e-6f);
  for (std::size_t i = 0; i < x.data().size(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Block, MatchesScalarOracle) {
  Rng rng(2);
  auto p = make_block(4, 2, rng);
  std::normal_distribution<float> d(0.0f, 0.5f);
  for (LoraLinear* l : {&p.q, &p.k, &p.v, &p.o, &p.fc1, &p.fc2}) {
    for (auto& v : l->base.weight.mutable_data()) v = d(rng);
    for (auto& v : l->base.bias.mutable_data()) v = d(rng);
  }
  for (auto& v : p.ln1_gamma.mutable_data()) v = 1.0f + d(rng);
  for (auto& v : p.ln2_beta.mutable_data()) v = d(rng);
  const auto x = Tensor::randn({2, 4}, 1.0f, rng);
  const auto y = block_forward(x, p, 1, 1e-6f);
  const auto ref = block_oracle(to_mat(x), p, 1e-6);
  for (int i = 0; i < 2; ++i)
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(y[i * 4 + c], ref[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)], 1e-5);
}

TEST(Block, AttentionRowsSumToOne) {
  Rng rng(3);
  const auto p = make_block(16, 4, rng);
  std::vector<Tensor> attention;
  (void)block_forward(Tensor::randn({7, 16}, 1.0f, rng), p, 4, 1e-6f, &attention);
  ASSERT_EQ(attention.size(), 4u);
  for (const auto& a : attention)
    for (int r = 0; r < 7; ++r) {
      double total = 0;
      for (int c = 0; c < 7; ++c) total += a[r * 7 + c];
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
}

TEST(Block, HeadCountMustDivideDim) {
  Rng rng(4);
  const auto p = make_block(10, 2, rng);
  EXPECT_THROW(block_forward(Tensor::zeros({3, 10}), p, 4, 1e-6f), ConfigError);
}

TEST(Lora, WrapIsNeutral) {
  Rng rng(5);
  const auto base = make_linear(6, 5, 0.3f, rng);
  const auto wrapped = lora_wrap(base, 2, 4.0f, rng);
  const auto x = Tensor::randn({3, 6}, 1.0f, rng);
  const auto a = linear_forward(x, base), b = wrapped.forward(x);
  for (std::size_t i = 0; i < a.data().size(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
}

TEST(Lora, ParameterCounts) {
  Rng rng(6);
  const auto wrapped = lora_wrap(make_linear(6, 5, 0.3f, rng), 3, 6.0f, rng);
  EXPECT_EQ(wrapped.lora_a.numel() + wrapped.lora_b.numel(), 3 * (6 + 5));
  EXPECT_EQ(wrapped.base.weight.numel() + wrapped.base.bias.numel(), 6 * 5 + 5);
  EXPECT_TRUE(wrapped.lora_a.requires_grad());
  EXPECT_TRUE(wrapped.lora_b.requires_grad());
  EXPECT_FALSE(wrapped.base.weight.requires_grad());
  EXPECT_FALSE(wrapped.base.bias.requires_grad());
}

TEST(Lora, RankOutOfRangeRejected) {
  Rng rng(7);
  const auto base = make_linear(4, 4, 0.3f, rng);
  EXPECT_THROW(lora_wrap(base, 0, 1.0f, rng), ParameterError);
  EXPECT_THROW(lora_wrap(base, 5, 1.0f, rng), ParameterError);
}

TEST(Lora, GradientStepChangesOnlyAdapters) {
  Rng rng(8);
  auto layer = lora_wrap(make_linear(4, 3, 0.3f, rng), 2, 2.0f, rng);
  const auto w0 = layer.base.weight.clone(), b0 = layer.base.bias.clone();
  const auto a0 = layer.lora_a.clone(), bb0 = layer.lora_b.clone();
  Adam adam({layer.lora_a, layer.lora_b}, {1e-2f});
  backward(sum(mul(layer.forward(Tensor::randn({5, 4}, 1.0f, rng)), Tensor::randn({5, 3}, 1.0f, rng))));
  adam.step();
  EXPECT_EQ(checksum(layer.base.weight), checksum(w0));
  EXPECT_EQ(checksum(layer.base.bias), checksum(b0));
  EXPECT_NE(checksum(layer.lora_b), checksum(bb0));
  // A only moves once B is nonzero.
  EXPECT_EQ(checksum(layer.lora_a), checksum(a0));
  backward(sum(mul(layer.forward(Tensor::randn({5, 4}, 1.0f, rng)), Tensor::randn({5, 3}, 1.0f, rng))));
  adam.step();
  EXPECT_NE(checksum(layer.lora_a), checksum(a0));
  EXPECT_EQ(checksum(layer.base.weight), checksum(w0));
}

TEST(Lora, MergeWithZeroBKeepsWeight) {
  Rng rng(9);
  const auto layer = lora_wrap(make_linear(4, 3, 0.3f, rng), 2, 2.0f, rng);
  const auto merged = lora_merge(layer);
  EXPECT_EQ(checksum(merged.base.weight), checksum(layer.base.weight));
  EXPECT_TRUE(merged.merged);
}

TEST(Lora, MergeMatchesUnmergedForward) {
  Rng rng(10);
  auto layer = lora_wrap(make_linear(12, 9, 0.3f, rng), 4, 8.0f, rng);
  for (auto& v : layer.lora_b.mutable_data()) v = std::normal_distribution<float>(0.0f, 0.5f)(rng);
  const auto merged = lora_merge(layer);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = Tensor::randn({2, 12}, 1.0f, rng);
    const auto a = layer.forward(x), b = merged.forward(x);
    for (std::size_t i = 0; i < a.data().size(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-5);
  }
}

TEST(Lora, RankOneAnalyticMerge) {
  Rng rng(11);
  auto layer = lora_wrap(Linear{Tensor::zeros({2, 2}), Tensor::zeros({2})}, 1, 1.0f, rng);
  layer.lora_a.assign(Tensor({1, 2}, {1, 0}));
  layer.lora_b.assign(Tensor({2, 1}, {0, 1}));
  const auto merged = lora_merge(layer);
  const auto w = merged.base.weight.data();
  EXPECT_EQ(std::vector<float>(w.begin(), w.end()), (std::vector<float>{0, 0, 1, 0}));
}

TEST(Lora, DoubleMergeRejected) {
  Rng rng(12);
  const auto merged = lora_merge(lora_wrap(make_linear(4, 4, 0.3f, rng), 2, 2.0f, rng));
  EXPECT_THROW(lora_merge(merged), StateError);
  EXPECT_THROW(lora_merge(LoraLinear(make_linear(4, 4, 0.3f, rng))), StateError);
}

TEST(Encoder, DepthZeroIsIdentity) {
  auto cfg = preset_config("tiny96");
  cfg.depth = 0;
  const auto model = TrackerModel::create(cfg);
  Rng rng(13);
  const auto seq = Tensor::randn({cfg.sequence_length(), cfg.dim}, 1.0f, rng);
  const auto out = encoder_forward(seq, model.encoder, cfg);
  const auto offset = static_cast<std::size_t>(cfg.template_tokens() * cfg.dim);
  ASSERT_EQ(out.search_feature_map.shape(), (Shape{6, 6, cfg.dim}));
  for (std::size_t i = 0; i < out.search_feature_map.data().size(); ++i)
    EXPECT_EQ(out.search_feature_map.data()[i], seq.data()[offset + i]);
}

TEST(Encoder, SearchMapShapeForLargePreset) {
  const auto cfg = preset_config("B-224");
  const auto model = TrackerModel::create(cfg);
  Rng rng(14);
  NoGradGuard guard;
  const auto out = encoder_forward(Tensor::randn({cfg.sequence_length(), cfg.dim}, 1.0f, rng), model.encoder, cfg);
  EXPECT_EQ(out.search_feature_map.shape(), (Shape{14, 14, cfg.dim}));
}

TEST(Encoder, FiniteOverSeeds) {
  NoGradGuard guard;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto cfg = preset_config("tiny96");
    cfg.seed = seed;
    const auto model = TrackerModel::create(cfg);
    Rng rng(seed);
    // Construction and every op raise on non-finite values, so completing is the check.
    EXPECT_NO_THROW(encoder_forward(Tensor::randn({cfg.sequence_length(), cfg.dim}, 1.0f, rng), model.encoder, cfg));
  }
}

TEST(Encoder, LengthMismatchRejected) {
  const auto cfg = preset_config("tiny96");
  const auto model = TrackerModel::create(cfg);
  EXPECT_THROW(encoder_forward(Tensor::zeros({3, cfg.dim}), model.encoder, cfg), DimensionError);
}

TEST(Encoder, MergedMultiplyCountEqualsBase) {
  const auto cfg = preset_config("tiny96");
  const auto base = TrackerModel::create(cfg);
  const auto merged = base.with_lora(8, 16.0f, 1).merged();
  Rng rng(15);
  const auto seq = Tensor::randn({cfg.sequence_length(), cfg.dim}, 1.0f, rng);
  NoGradGuard guard;
  kernels::reset_multiply_count();
  (void)encoder_forward(seq, base.encoder, cfg);
  const auto a = kernels::multiply_count();
  kernels::reset_multiply_count();
  (void)encoder_forward(seq, merged.encoder, cfg);
  EXPECT_EQ(kernels::multiply_count(), a);
}

}  // namespace
}  // namespace lorat
