#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lorat/errors.hpp"
#include "lorat/kernels.hpp"
#include "lorat/optim.hpp"
#include "lorat/oracles.hpp"
#include "lorat/tensor.hpp"

namespace lorat {
namespace {

std::vector<float> random_values(std::size_t n, Rng& rng) {
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const auto out = matmul(eye, a);
  EXPECT_EQ(std::vector<float>(out.data().begin(), out.data().end()), (std::vector<float>{1, 2, 3, 4}));
}

TEST(Matmul, TwoByTwo) {
  const auto out = matmul(Tensor({2, 2}, {1, 2, 3, 4}), Tensor({2, 2}, {5, 6, 7, 8}));
  EXPECT_EQ(std::vector<float>(out.data().begin(), out.data().end()), (std::vector<float>{19, 22, 43, 50}));
}

TEST(Matmul, MatchesTripleLoopOracle) {
  Rng rng(1);
  for (auto [m, k, n] : {std::array{7, 5, 3}, std::array{16, 16, 16}, std::array{1, 9, 4}}) {
    const Tensor a({m, k}, random_values(static_cast<std::size_t>(m * k), rng));
    const Tensor b({k, n}, random_values(static_cast<std::size_t>(k * n), rng));
    const auto out = matmul(a, b);
    const auto ref = oracles::matmul(a.data(), b.data(), m, k, n);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.data()[i], ref[i], 1e-6);
  }
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST(Kernels, ParallelMatchesSerialBitwise) {
  Rng rng(2);
  const std::int64_t m = 96, k = 80, n = 72;  // above the parallel threshold
  const auto a = random_values(static_cast<std::size_t>(m * k), rng);
  const auto b = random_values(static_cast<std::size_t>(k * n), rng);
  const auto bt = random_values(static_cast<std::size_t>(n * k), rng);
  const auto at = random_values(static_cast<std::size_t>(k * m), rng);
  std::vector<float> c1(static_cast<std::size_t>(m * n)), c2(c1.size());
  kernels::gemm_nn(a, b, c1, m, k, n);
  kernels::serial::gemm_nn(a, b, c2, m, k, n);
  EXPECT_EQ(c1, c2);
  kernels::gemm_nt(a, bt, c1, m, k, n);
  kernels::serial::gemm_nt(a, bt, c2, m, k, n);
  EXPECT_EQ(c1, c2);
  kernels::gemm_tn(at, b, c1, m, k, n);
  kernels::serial::gemm_tn(at, b, c2, m, k, n);
  EXPECT_EQ(c1, c2);
}

TEST(Kernels, MultiplyCounterCountsGemm) {
  std::vector<float> a(6, 1.0f), b(12, 1.0f), c(8);
  kernels::reset_multiply_count();
  kernels::gemm_nn(a, b, c, 2, 3, 4);
  EXPECT_EQ(kernels::multiply_count(), 24u);
}

TEST(Softmax, UniformOnZeros) {
  const auto s = softmax(Tensor({1, 3}, {0, 0, 0}), 1);
  for (float v : s.data()) EXPECT_NEAR(v, 1.0f / 3.0f, 1e-7);
}

TEST(Softmax, StableForLargeLogits) {
  const auto s = softmax(Tensor({1, 2}, {1000, 0}), 1);
  EXPECT_NEAR(s[0], 1.0f, 1e-7);
  EXPECT_NEAR(s[1], 0.0f, 1e-7);
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(3);
  const auto s = softmax(Tensor({4, 11}, random_values(44, rng)), 1);
  for (int r = 0; r < 4; ++r) {
    double total = 0.0;
    for (int c = 0; c < 11; ++c) total += s[r * 11 + c];
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Softmax, ColumnAxis) {
  const auto s = softmax(Tensor({2, 2}, {0, 5, 0, 5}), 0);
  for (float v : s.data()) EXPECT_NEAR(v, 0.5f, 1e-7);
}

TEST(LayerNorm, ConstantRowGivesZeros) {
  const auto y = layernorm(Tensor({1, 4}, {3, 3, 3, 3}), Tensor::full({4}, 1), Tensor::zeros({4}), 1e-6f);
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(LayerNorm, CenteredOutput) {
  const auto y = layernorm(Tensor({1, 3}, {1, 2, 3}), Tensor::full({3}, 1), Tensor::zeros({3}), 1e-6f);
  EXPECT_NEAR(y[0] + y[1] + y[2], 0.0f, 1e-6);
}

TEST(LayerNorm, MatchesScalarLoop) {
  Rng rng(4);
  const auto x = random_values(16, rng);
  const auto g = random_values(16, rng);
  const auto b = random_values(16, rng);
  const auto y = layernorm(Tensor({1, 16}, x), Tensor({16}, g), Tensor({16}, b), 1e-6f);
  double mean = 0.0, var = 0.0;
  for (float v : x) mean += v;
  mean /= 16;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= 16;
  for (int i = 0; i < 16; ++i) {
    const double ref = (x[i] - mean) / std::sqrt(var + 1e-6) * g[i] + b[i];
    EXPECT_NEAR(y[i], ref, 1e-5);
  }
}

TEST(LayerNorm, StatisticsHold) {
  Rng rng(5);
  const auto y = layernorm(Tensor({3, 32}, random_values(96, rng)), Tensor::full({32}, 1), Tensor::zeros({32}), 1e-6f);
  for (int r = 0; r < 3; ++r) {
    double mean = 0.0, sq = 0.0;
    for (int c = 0; c < 32; ++c) mean += y[r * 32 + c];
    mean /= 32;
    for (int c = 0; c < 32; ++c) sq += (y[r * 32 + c] - mean) * (y[r * 32 + c] - mean);
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(sq / 32, 1.0, 1e-4);
  }
}

TEST(LayerNorm, NonPositiveEpsRejected) {
  EXPECT_THROW(layernorm(Tensor::zeros({1, 2}), Tensor::full({2}, 1), Tensor::zeros({2}), 0.0f), ParameterError);
}

TEST(Gelu, Values) {
  EXPECT_EQ(gelu_scalar(0.0f), 0.0f);
  EXPECT_NEAR(gelu_scalar(20.0f), 20.0f, 1e-5);
  EXPECT_NEAR(gelu_scalar(-20.0f), 0.0f, 1e-5);
  const double x = 1.0;
  const double ref = 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
  EXPECT_NEAR(gelu_scalar(1.0f), ref, 1e-6);
}

TEST(Tensor, NonFiniteConstructionRejected) {
  EXPECT_THROW(Tensor({1}, {std::nanf("")}), NumericError);
  EXPECT_THROW(Tensor({2}, {1.0f}), DimensionError);
}

TEST(Tensor, OverflowingOpRaises) {
  const Tensor big({1}, {3e38f});
  EXPECT_THROW(add(big, big), NumericError);
}

TEST(Backward, SumGivesOnes) {
  Tensor x({3}, {1, 2, 3}, true);
  backward(sum(x));
  for (float g : x.grad()) EXPECT_EQ(g, 1.0f);
}

TEST(Backward, Quadratic) {
  Tensor x({2}, {1, 2}, true);
  backward(sum(mul(x, x)));
  EXPECT_EQ(x.grad()[0], 2.0f);
  EXPECT_EQ(x.grad()[1], 4.0f);
}

TEST(Backward, NonScalarRejected) {
  Tensor x({2}, {1, 2}, true);
  EXPECT_THROW(backward(scale(x, 2.0f)), ContractError);
}

TEST(Backward, NoGradGuardStopsRecording) {
  Tensor x({2}, {1, 2}, true);
  NoGradGuard guard;
  EXPECT_FALSE(scale(x, 2.0f).tracked());
}

TEST(FiniteDifference, SumGivesOnes) {
  const Tensor x({4}, {0.5f, -1, 2, 3});
  const auto g = finite_difference_gradient([](const Tensor& t) { return sum(t).item(); }, x, 1e-3f);
  for (float v : g.data()) EXPECT_NEAR(v, 1.0f, 1e-3);
}

TEST(FiniteDifference, Square) {
  const Tensor x({1}, {3.0f});
  const auto g = finite_difference_gradient([](const Tensor& t) { return t[0] * t[0]; }, x, 1e-3f);
  EXPECT_NEAR(g[0], 6.0f, 1e-4);
}

TEST(FiniteDifference, RejectsBadStep) {
  const Tensor x({1}, {3.0f});
  EXPECT_THROW(finite_difference_gradient([](const Tensor& t) { return t[0]; }, x, 0.0f), ParameterError);
}

// Every differentiable op against central differences on small random inputs.
class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  Rng rng(100 + GetParam());
  Tensor x({3, 4}, random_values(12, rng), true);
  const Tensor w({4, 4}, random_values(16, rng));
  const Tensor g({4}, random_values(4, rng));
  const Tensor bta({4}, random_values(4, rng));
  const Tensor probe({3, 4}, random_values(12, rng));
  std::vector<float> half(12);
  for (auto& v : half) v = static_cast<float>(rng() % 2);
  const Tensor targets({3, 4}, half);
  const std::vector<int> ids{2, 0, 2};
  const std::vector<std::int64_t> rows{1, 1, 0};

  auto f = [&](const Tensor& t) -> Tensor {
    switch (GetParam()) {
      case 0: return sum(mul(matmul(t, w), probe));
      case 1: return sum(mul(matmul_nt(t, w), probe));
      case 2: return sum(mul(transpose(t), transpose(probe)));
      case 3: return sum(mul(softmax(t, 1), probe));
      case 4: return sum(mul(softmax(t, 0), probe));
      case 5: return sum(mul(layernorm(t, g, bta, 1e-6f), probe));
      case 6: return sum(mul(gelu(t), probe));
      case 7: return sum(mul(softplus(t), probe));
      case 8: return sum(mul(abs(add(t, Tensor::full({3, 4}, 3.0f))), probe));
      case 9: return bce_with_logits(t, targets);
      case 10: return mean(mul(add_bias(t, g), probe));
      case 11: return sum(mul(concat_cols({slice_cols(t, 2, 2), slice_cols(t, 0, 2)}), probe));
      case 12: return sum(mul(concat_rows({slice_rows(t, 1, 2), slice_rows(t, 0, 1)}), probe));
      case 13: return sum(mul(select_rows(t, rows), probe));
      case 14: return sum(mul(gather_rows(t, ids), probe));
      case 15: return sum(mul(reshape(sub(t, probe), {4, 3}), reshape(probe, {4, 3})));
      default: return sum(scale(mul(t, t), 0.5f));
    }
  };
  backward(f(x));
  const std::vector<float> analytic(x.grad().begin(), x.grad().end());
  const auto numeric = finite_difference_gradient([&](const Tensor& t) { return f(t).item(); }, x, 1e-3f);
  EXPECT_LT(relative_error(analytic, numeric.data()), 1e-3) << "op case " << GetParam();
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range(0, 17));

TEST(Adam, MovesAgainstGradient) {
  Tensor x({2}, {1.0f, -1.0f}, true);
  Adam adam({x}, {0.1f});
  backward(sum(mul(x, x)));
  adam.step();
  EXPECT_LT(x[0], 1.0f);
  EXPECT_GT(x[1], -1.0f);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Adam, ZeroLearningRateLeavesValues) {
  Tensor x({2}, {1.0f, -1.0f}, true);
  Adam adam({x}, {0.0f});
  backward(sum(mul(x, x)));
  adam.step();
  EXPECT_EQ(x[0], 1.0f);
  EXPECT_EQ(x[1], -1.0f);
}

}  // namespace
}  // namespace lorat
