#pragma once

// Pre-norm ViT encoder over the joint template+search sequence, with LoRA
// adapters on every linear projection.

#include <string>
#include <vector>

#include "lorat/config.hpp"
#include "lorat/embedding.hpp"
#include "lorat/tensor.hpp"

namespace lorat {

struct Linear {
  Tensor weight;  // [out×in]
  Tensor bias;    // [out]

  std::int64_t in_features() const { return weight.dim(1); }
  std::int64_t out_features() const { return weight.dim(0); }
};

Linear make_linear(std::int64_t in, std::int64_t out, float stddev, Rng& rng);
Tensor linear_forward(const Tensor& x, const Linear& layer);

/// Frozen base layer plus an optional rank-r update (alpha/r)·B·A.
/// rank == 0 means a plain, unadapted layer.
struct LoraLinear {
  Linear base;
  Tensor lora_a;  // [r×in]
  Tensor lora_b;  // [out×r]
  int rank = 0;
  float alpha = 0.0f;
  bool merged = false;

  LoraLinear() = default;
  explicit LoraLinear(Linear layer) : base(std::move(layer)) {}

  bool adapted() const { return rank > 0; }
  float scaling() const { return adapted() ? alpha / static_cast<float>(rank) : 0.0f; }
  Tensor forward(const Tensor& x) const;
};

/// Copies `layer`, freezes the copy and attaches A ~ N(0, 0.02²) (seeded), B = 0.
LoraLinear lora_wrap(const Linear& layer, int rank, float alpha, Rng& rng);
/// Folds (alpha/r)·B·A into the weight. Throws StateError if already merged or unadapted.
LoraLinear lora_merge(const LoraLinear& layer);

struct BlockParams {
  Tensor ln1_gamma, ln1_beta;
  LoraLinear q, k, v, o;
  Tensor ln2_gamma, ln2_beta;
  LoraLinear fc1, fc2;
};

BlockParams make_block(int dim, int mlp_ratio, Rng& rng);

/// LN → multi-head self-attention → residual → LN → MLP(GELU) → residual.
/// All tokens attend to all tokens. When `attention` is non-null it receives
/// one [N×N] probability matrix per head.
Tensor block_forward(const Tensor& x, const BlockParams& params, int heads, float ln_eps,
                     std::vector<Tensor>* attention = nullptr);

struct Encoder {
  std::vector<BlockParams> blocks;
  int heads = 1;
  float ln_eps = 1e-6f;
};

struct EncoderOutput {
  Tensor all_tokens;          // [(N_z+N_x)×D]
  Tensor search_feature_map;  // [h_x×w_x×D], the trailing N_x rows
  GridSize search_grid;
};

EncoderOutput encoder_forward(const Tensor& sequence, const Encoder& encoder, const TrackerConfig& config);

/// Visits every linear layer with its archive prefix, e.g. "blocks.0.attn.q".
template <typename E, typename F>
void for_each_linear(E& encoder, F&& fn) {
  for (std::size_t i = 0; i < encoder.blocks.size(); ++i) {
    auto& b = encoder.blocks[i];
    const std::string p = "blocks." + std::to_string(i);
    fn(p + ".attn.q", b.q);
    fn(p + ".attn.k", b.k);
    fn(p + ".attn.v", b.v);
    fn(p + ".attn.o", b.o);
    fn(p + ".mlp.fc1", b.fc1);
    fn(p + ".mlp.fc2", b.fc2);
  }
}

}  // namespace lorat
