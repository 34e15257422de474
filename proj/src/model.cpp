#include "lorat/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "lorat/errors.hpp"

namespace lorat {

namespace {

Tensor deep(const Tensor& t) { return t.defined() ? t.clone() : t; }

Linear deep(const Linear& l) { return {deep(l.weight), deep(l.bias)}; }

LoraLinear deep(const LoraLinear& l) {
  LoraLinear c = l;
  c.base = deep(l.base);
  c.lora_a = deep(l.lora_a);
  c.lora_b = deep(l.lora_b);
  return c;
}

template <typename F>
void visit_all(const TrackerModel& m, F&& fn) {
  fn("patch_proj", m.patch_proj);
  fn("pos_embed", m.pos.q);
  fn("token_type", m.token_type.embeddings);
  for (std::size_t i = 0; i < m.encoder.blocks.size(); ++i) {
    const auto& b = m.encoder.blocks[i];
    const std::string p = "blocks." + std::to_string(i);
    fn(p + ".ln1.gamma", b.ln1_gamma);
    fn(p + ".ln1.beta", b.ln1_beta);
    fn(p + ".ln2.gamma", b.ln2_gamma);
    fn(p + ".ln2.beta", b.ln2_beta);
  }
  for_each_linear(m.encoder, [&](const std::string& name, const LoraLinear& l) {
    fn(name + ".weight", l.base.weight);
    fn(name + ".bias", l.base.bias);
    if (l.adapted()) {
      fn(name + ".lora_a", l.lora_a);
      fn(name + ".lora_b", l.lora_b);
    }
  });
  for (std::size_t i = 0; i < 3; ++i) {
    fn("head.cls." + std::to_string(i) + ".weight", m.head.cls[i].weight);
    fn("head.cls." + std::to_string(i) + ".bias", m.head.cls[i].bias);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    fn("head.reg." + std::to_string(i) + ".weight", m.head.reg[i].weight);
    fn("head.reg." + std::to_string(i) + ".bias", m.head.reg[i].bias);
  }
}

void set_trainable(Tensor& t, bool on) {
  if (t.defined()) t.set_requires_grad(on);
}

}  // namespace

TrackerModel TrackerModel::create(const TrackerConfig& config) {
  config.validate();
  TrackerModel m;
  m.config_ = config;
  Rng rng(config.seed);
  const std::int64_t d = config.dim;
  const std::int64_t patch_width = 3LL * config.patch * config.patch;
  m.patch_proj = Tensor::randn({patch_width, d}, 1.0f / std::sqrt(static_cast<float>(patch_width)), rng);
  const GridSize grid{config.search_grid(), config.search_grid()};
  m.pos = PositionalEmbedding(Tensor::randn({grid.count(), d}, 0.02f, rng), grid);
  m.token_type = TokenTypeTable(Tensor::randn({kTokenTypeCount, d}, 0.02f, rng));
  m.encoder.heads = config.heads;
  m.encoder.ln_eps = config.ln_eps;
  for (int i = 0; i < config.depth; ++i) m.encoder.blocks.push_back(make_block(config.dim, config.mlp_ratio, rng));
  m.head = make_head(config.dim, config.head_hidden, rng);
  return m;
}

TrackerModel TrackerModel::clone() const {
  TrackerModel m;
  m.config_ = config_;
  m.patch_proj = deep(patch_proj);
  m.pos = PositionalEmbedding(deep(pos.q), pos.grid);
  m.token_type = TokenTypeTable(deep(token_type.embeddings));
  m.encoder.heads = encoder.heads;
  m.encoder.ln_eps = encoder.ln_eps;
  for (const auto& b : encoder.blocks) {
    BlockParams c;
    c.ln1_gamma = deep(b.ln1_gamma);
    c.ln1_beta = deep(b.ln1_beta);
    c.q = deep(b.q);
    c.k = deep(b.k);
    c.v = deep(b.v);
    c.o = deep(b.o);
    c.ln2_gamma = deep(b.ln2_gamma);
    c.ln2_beta = deep(b.ln2_beta);
    c.fc1 = deep(b.fc1);
    c.fc2 = deep(b.fc2);
    m.encoder.blocks.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    m.head.cls[i] = deep(head.cls[i]);
    m.head.reg[i] = deep(head.reg[i]);
  }
  return m;
}

TrackerModel TrackerModel::with_lora(int rank, float alpha, std::uint64_t seed) const {
  if (adapted()) throw StateError("with_lora: model already carries adapters");
  TrackerModel m = clone();
  m.config_.lora_rank = rank;
  m.config_.lora_alpha = alpha;
  for (auto& [name, t] : m.parameters()) set_trainable(t, false);
  Rng rng(seed);
  for_each_linear(m.encoder, [&](const std::string&, LoraLinear& l) { l = lora_wrap(l.base, rank, alpha, rng); });
  set_trainable(m.pos.q, true);
  set_trainable(m.token_type.embeddings, true);
  for (std::size_t i = 0; i < 3; ++i) {
    set_trainable(m.head.cls[i].weight, true);
    set_trainable(m.head.cls[i].bias, true);
    set_trainable(m.head.reg[i].weight, true);
    set_trainable(m.head.reg[i].bias, true);
  }
  return m;
}

TrackerModel TrackerModel::merged() const {
  TrackerModel m = clone();
  for_each_linear(m.encoder, [&](const std::string&, LoraLinear& l) {
    if (l.adapted() && !l.merged) l = lora_merge(l);
  });
  for (auto& [name, t] : m.parameters()) set_trainable(t, false);
  return m;
}

bool TrackerModel::adapted() const {
  bool any = false;
  for_each_linear(encoder, [&](const std::string&, const LoraLinear& l) { any = any || l.adapted(); });
  return any;
}

bool TrackerModel::is_merged() const {
  bool all = adapted();
  for_each_linear(encoder, [&](const std::string&, const LoraLinear& l) { all = all && l.merged; });
  return all;
}

std::vector<NamedParam> TrackerModel::parameters() const {
  std::vector<NamedParam> out;
  visit_all(*this, [&](const std::string& name, const Tensor& t) { out.push_back({name, t}); });
  return out;
}

std::vector<NamedParam> TrackerModel::trainable_parameters() const {
  std::vector<NamedParam> out;
  for (auto& p : parameters())
    if (p.tensor.requires_grad()) out.push_back(p);
  return out;
}

std::vector<NamedParam> TrackerModel::frozen_parameters() const {
  std::vector<NamedParam> out;
  for (auto& p : parameters())
    if (!p.tensor.requires_grad()) out.push_back(p);
  return out;
}

void TrackerModel::load(const TensorArchive& archive) {
  // Wrap layers that the archive provides adapters for.
  for_each_linear(encoder, [&](const std::string& name, LoraLinear& l) {
    const Tensor* a = find_tensor(archive, name + ".lora_a");
    const Tensor* b = find_tensor(archive, name + ".lora_b");
    if ((a == nullptr) != (b == nullptr)) throw Error("load: '" + name + "' has only one adapter tensor");
    if (a == nullptr || l.adapted()) return;
    if (a->rank() != 2 || b->rank() != 2 || a->dim(0) != b->dim(1)) {
      throw DimensionError("load: adapter shapes for '" + name + "' are inconsistent");
    }
    Rng unused(0);
    l = lora_wrap(l.base, static_cast<int>(a->dim(0)), config_.lora_alpha, unused);
    config_.lora_rank = static_cast<int>(a->dim(0));
  });

  std::vector<std::string> known;
  for (auto& [name, t] : parameters()) {
    known.push_back(name);
    if (const Tensor* src = find_tensor(archive, name)) {
      if (src->shape() != t.shape()) {
        throw DimensionError("load: '" + name + "' has shape " + shape_str(src->shape()) + ", expected " +
                             shape_str(t.shape()));
      }
      Tensor dst = t;
      dst.assign(*src);
    }
  }
  for (const auto& e : archive) {
    if (std::find(known.begin(), known.end(), e.name) == known.end()) {
      throw Error("load: archive tensor '" + e.name + "' does not belong to this model");
    }
  }
}

TensorArchive TrackerModel::save(bool trainable_only) const {
  TensorArchive out;
  for (auto& [name, t] : trainable_only ? trainable_parameters() : parameters()) out.push_back({name, t.detach()});
  return out;
}

Tensor TrackerModel::embed_template(const Tensor& template_image) const {
  return patch_embed(template_image, patch_proj, config_.patch);
}

EncoderOutput TrackerModel::encode(const Tensor& template_tokens, std::span<const int> ids,
                                   const Tensor& search_image) const {
  auto search_tokens = patch_embed(search_image, patch_proj, config_.patch);
  const GridSize tgrid{config_.template_grid(), config_.template_grid()};
  auto seq = assemble_input(template_tokens, tgrid, search_tokens, pos, token_type, ids, config_.strategy);
  return encoder_forward(seq, encoder, config_);
}

HeadOutput TrackerModel::forward(const Tensor& template_tokens, std::span<const int> ids,
                                 const Tensor& search_image) const {
  return head_forward(encode(template_tokens, ids, search_image).search_feature_map, head);
}

std::uint64_t checksum(const Tensor& t) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  for (auto d : t.shape()) mix(static_cast<std::uint64_t>(d));
  for (float v : t.data()) mix(std::bit_cast<std::uint32_t>(v));
  return h;
}

}  // namespace lorat
