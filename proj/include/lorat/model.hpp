#pragma once

// Full tracker network: frozen patch stem, shared positional embedding,
// token-type table, LoRA-adaptable encoder and the MLP head.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lorat/archive.hpp"
#include "lorat/config.hpp"
#include "lorat/embedding.hpp"
#include "lorat/encoder.hpp"
#include "lorat/head.hpp"

namespace lorat {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

class TrackerModel {
 public:
  /// Randomly initialized, unadapted, nothing trainable.
  static TrackerModel create(const TrackerConfig& config);

  const TrackerConfig& config() const { return config_; }

  /// Deep copy; trainable flags preserved.
  TrackerModel clone() const;
  /// Deep copy with adapters on every encoder linear; adapters, head and
  /// embedding tables become trainable, everything else frozen.
  TrackerModel with_lora(int rank, float alpha, std::uint64_t seed) const;
  /// Deep copy with every adapter folded into its base weight, nothing trainable.
  TrackerModel merged() const;

  bool adapted() const;
  bool is_merged() const;

  /// Every tensor under its archive name, in a fixed order.
  std::vector<NamedParam> parameters() const;
  std::vector<NamedParam> trainable_parameters() const;
  std::vector<NamedParam> frozen_parameters() const;

  /// Overwrites tensors by name. Adapter tensors on an unadapted model wrap the
  /// layer first (rank from the tensor shape, alpha from the config).
  void load(const TensorArchive& archive);
  TensorArchive save(bool trainable_only = false) const;

  /// Template patch tokens [N_z×D] (before positional and type embeddings).
  Tensor embed_template(const Tensor& template_image) const;
  HeadOutput forward(const Tensor& template_tokens, std::span<const int> ids,
                     const Tensor& search_image) const;
  EncoderOutput encode(const Tensor& template_tokens, std::span<const int> ids,
                       const Tensor& search_image) const;

  Tensor patch_proj;
  PositionalEmbedding pos;
  TokenTypeTable token_type;
  Encoder encoder;
  HeadParams head;

 private:
  TrackerConfig config_;
};

/// Stable 64-bit FNV-1a over shapes and raw bits of all named tensors.
std::uint64_t checksum(const Tensor& t);

}  // namespace lorat
