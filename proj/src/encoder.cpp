#include "lorat/encoder.hpp"

#include <cmath>

#include "lorat/errors.hpp"
#include "lorat/kernels.hpp"

namespace lorat {

Linear make_linear(std::int64_t in, std::int64_t out, float stddev, Rng& rng) {
  return {Tensor::randn({out, in}, stddev, rng), Tensor::zeros({out})};
}

Tensor linear_forward(const Tensor& x, const Linear& layer) {
  return add_bias(matmul_nt(x, layer.weight), layer.bias);
}

Tensor LoraLinear::forward(const Tensor& x) const {
  auto y = linear_forward(x, base);
  if (!adapted() || merged) return y;
  auto low = matmul_nt(matmul_nt(x, lora_a), lora_b);
  return add(y, scale(low, scaling()));
}

LoraLinear lora_wrap(const Linear& layer, int rank, float alpha, Rng& rng) {
  const auto in = layer.in_features(), out = layer.out_features();
  if (rank < 1 || rank > std::min(in, out)) {
    throw ParameterError("lora_wrap: rank " + std::to_string(rank) + " outside [1, " +
                         std::to_string(std::min(in, out)) + "]");
  }
  if (!(alpha > 0.0f)) throw ParameterError("lora_wrap: alpha must be positive");
  LoraLinear wrapped;
  wrapped.base = {layer.weight.detach(), layer.bias.detach()};
  wrapped.lora_a = Tensor::randn({rank, in}, 0.02f, rng, true);
  wrapped.lora_b = Tensor::zeros({out, rank}, true);
  wrapped.rank = rank;
  wrapped.alpha = alpha;
  return wrapped;
}

LoraLinear lora_merge(const LoraLinear& layer) {
  if (!layer.adapted()) throw StateError("lora_merge: layer has no adapter");
  if (layer.merged) throw StateError("lora_merge: layer is already merged");
  const auto in = layer.base.in_features(), out = layer.base.out_features();
  std::vector<float> delta(static_cast<std::size_t>(out * in));
  kernels::serial::gemm_nn(layer.lora_b.data(), layer.lora_a.data(), delta, out, layer.rank, in);
  LoraLinear merged = layer;
  auto w = layer.base.weight.detach();
  auto wd = w.mutable_data();
  const float s = layer.scaling();
  for (std::size_t i = 0; i < wd.size(); ++i) wd[i] += s * delta[i];
  merged.base = {w, layer.base.bias.detach()};
  merged.lora_a = layer.lora_a.detach();
  merged.lora_b = layer.lora_b.detach();
  merged.merged = true;
  return merged;
}

BlockParams make_block(int dim, int mlp_ratio, Rng& rng) {
  const std::int64_t d = dim, hidden = static_cast<std::int64_t>(dim) * mlp_ratio;
  constexpr float kStd = 0.02f;
  BlockParams b;
  b.ln1_gamma = Tensor::full({d}, 1.0f);
  b.ln1_beta = Tensor::zeros({d});
  b.q = LoraLinear(make_linear(d, d, kStd, rng));
  b.k = LoraLinear(make_linear(d, d, kStd, rng));
  b.v = LoraLinear(make_linear(d, d, kStd, rng));
  b.o = LoraLinear(make_linear(d, d, kStd, rng));
  b.ln2_gamma = Tensor::full({d}, 1.0f);
  b.ln2_beta = Tensor::zeros({d});
  b.fc1 = LoraLinear(make_linear(d, hidden, kStd, rng));
  b.fc2 = LoraLinear(make_linear(hidden, d, kStd, rng));
  return b;
}

Tensor block_forward(const Tensor& x, const BlockParams& p, int heads, float ln_eps,
                     std::vector<Tensor>* attention) {
  if (x.rank() != 2) throw DimensionError("block_forward: expected [N x D]");
  const auto d = x.dim(1);
  if (heads < 1 || d % heads != 0) {
    throw ConfigError("block_forward: dim " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const auto head_dim = d / heads;
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(head_dim));

  auto h = layernorm(x, p.ln1_gamma, p.ln1_beta, ln_eps);
  auto q = p.q.forward(h);
  auto k = p.k.forward(h);
  auto v = p.v.forward(h);
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int hd = 0; hd < heads; ++hd) {
    const auto start = hd * head_dim;
    auto qh = slice_cols(q, start, head_dim);
    auto kh = slice_cols(k, start, head_dim);
    auto vh = slice_cols(v, start, head_dim);
    auto probs = softmax(scale(matmul_nt(qh, kh), inv_sqrt), 1);
    if (attention) attention->push_back(probs);
    outs.push_back(matmul(probs, vh));
  }
  auto attn = heads == 1 ? outs.front() : concat_cols(outs);
  auto x1 = add(x, p.o.forward(attn));
  auto h2 = layernorm(x1, p.ln2_gamma, p.ln2_beta, ln_eps);
  return add(x1, p.fc2.forward(gelu(p.fc1.forward(h2))));
}

EncoderOutput encoder_forward(const Tensor& sequence, const Encoder& encoder, const TrackerConfig& config) {
  const auto expected = static_cast<std::int64_t>(config.sequence_length());
  if (sequence.rank() != 2 || sequence.dim(0) != expected) {
    throw DimensionError("encoder_forward: sequence " + shape_str(sequence.shape()) + ", expected " +
                         std::to_string(expected) + " tokens");
  }
  Tensor x = sequence;
  for (const auto& block : encoder.blocks) x = block_forward(x, block, encoder.heads, encoder.ln_eps);
  const GridSize grid{config.search_grid(), config.search_grid()};
  const auto n_x = static_cast<std::int64_t>(grid.count());
  auto search = slice_rows(x, x.dim(0) - n_x, n_x);
  return {x, reshape(search, {grid.h, grid.w, x.dim(1)}), grid};
}

}  // namespace lorat
