#include "lorat/embedding.hpp"

#include <cmath>
#include <string>

#include "lorat/errors.hpp"

namespace lorat {

PositionalEmbedding::PositionalEmbedding(Tensor table, GridSize g) : q(std::move(table)), grid(g) {
  if (q.rank() != 2) throw DimensionError("positional embedding must be [L x D]");
  if (grid.h < 1 || grid.w < 1 || q.dim(0) != static_cast<std::int64_t>(grid.count())) {
    throw DimensionError("positional embedding length " + std::to_string(q.dim(0)) +
                         " does not match grid " + std::to_string(grid.h) + "x" +
                         std::to_string(grid.w));
  }
}

std::span<const float> PositionalEmbedding::at(int i, int j) const {
  const auto d = dim();
  return q.data().subspan(static_cast<std::size_t>((i * grid.w + j) * d), static_cast<std::size_t>(d));
}

TokenTypeTable::TokenTypeTable(Tensor table) : embeddings(std::move(table)) {
  if (embeddings.rank() != 2 || embeddings.dim(0) != kTokenTypeCount) {
    throw DimensionError("token type table must have exactly three rows");
  }
}

Tensor patchify(const Tensor& image, int patch) {
  if (image.rank() != 3) throw DimensionError("patchify: expected [C x H x W]");
  if (patch < 1) throw ParameterError("patchify: patch size must be positive");
  const auto c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h % patch != 0 || w % patch != 0) {
    throw DimensionError("patchify: " + shape_str(image.shape()) + " not divisible by patch " +
                         std::to_string(patch));
  }
  const auto gh = h / patch, gw = w / patch;
  const auto width = c * patch * patch;
  std::vector<float> out(static_cast<std::size_t>(gh * gw * width));
  const auto d = image.data();
  std::size_t o = 0;
  for (std::int64_t gi = 0; gi < gh; ++gi)
    for (std::int64_t gj = 0; gj < gw; ++gj)
      for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t dy = 0; dy < patch; ++dy)
          for (std::int64_t dx = 0; dx < patch; ++dx)
            out[o++] = d[static_cast<std::size_t>((ch * h + gi * patch + dy) * w + gj * patch + dx)];
  return Tensor({gh * gw, width}, std::move(out));
}

Tensor patch_embed(const Tensor& image, const Tensor& proj, int patch) {
  const auto patches = patchify(image, patch);
  if (proj.rank() != 2 || proj.dim(0) != patches.dim(1)) {
    throw DimensionError("patch_embed: projection " + shape_str(proj.shape()) +
                         " does not accept patches of width " + std::to_string(patches.dim(1)));
  }
  return matmul(patches, proj);
}

TokenTypeIds token_type_ids(GridSize template_grid, GridSize search_grid, const BBox& box, int patch) {
  if (patch < 1 || template_grid.h < 1 || template_grid.w < 1 || search_grid.h < 1 || search_grid.w < 1) {
    throw ParameterError("token_type_ids: grids and patch must be positive");
  }
  if (!box.finite() || box.w < 0.0 || box.h < 0.0) throw ParameterError("token_type_ids: invalid box");
  constexpr double kSlack = 1e-6;
  const double tw = static_cast<double>(template_grid.w) * patch;
  const double th = static_cast<double>(template_grid.h) * patch;
  if (box.x < -kSlack || box.y < -kSlack || box.right() > tw + kSlack || box.bottom() > th + kSlack) {
    throw ParameterError("token_type_ids: box lies outside the template image");
  }

  TokenTypeIds out;
  out.ids.reserve(static_cast<std::size_t>(template_grid.count() + search_grid.count()));
  out.degenerate_box = box.area() <= 0.0;
  const double half = 0.5 * patch;
  for (int i = 0; i < template_grid.h; ++i)
    for (int j = 0; j < template_grid.w; ++j) {
      const double cx = j * patch + half;
      const double cy = i * patch + half;
      const bool fg = !out.degenerate_box && cx >= box.x && cx < box.right() && cy >= box.y &&
                      cy < box.bottom();
      out.ids.push_back(static_cast<int>(fg ? TokenType::TemplateForeground : TokenType::TemplateBackground));
      out.foreground += fg ? 1 : 0;
    }
  out.ids.insert(out.ids.end(), static_cast<std::size_t>(search_grid.count()),
                 static_cast<int>(TokenType::Search));
  return out;
}

Tensor resample_matrix(GridSize source, GridSize target, PeStrategy strategy) {
  if (target.h < 1 || target.w < 1) throw ParameterError("resample: target grid must be at least 1x1");
  if (source.h < 1 || source.w < 1) throw ParameterError("resample: empty source grid");
  const auto rows = static_cast<std::size_t>(target.count());
  const auto cols = static_cast<std::size_t>(source.count());
  std::vector<float> m(rows * cols, 0.0f);

  if (strategy == PeStrategy::Slice) {
    if (target.h > source.h || target.w > source.w) {
      throw ParameterError("resample: slice target larger than source grid");
    }
    for (int i = 0; i < target.h; ++i)
      for (int j = 0; j < target.w; ++j)
        m[static_cast<std::size_t>(i * target.w + j) * cols + static_cast<std::size_t>(i * source.w + j)] = 1.0f;
    return Tensor({target.count(), source.count()}, std::move(m));
  }

  // Align-corners: output index t maps to t·(S−1)/(T−1); a single output samples index 0.
  auto axis = [](int t, int out_len, int src_len, int& lo, int& hi, float& frac) {
    const double pos = out_len > 1 ? static_cast<double>(t) * (src_len - 1) / (out_len - 1) : 0.0;
    lo = static_cast<int>(std::floor(pos));
    if (lo > src_len - 1) lo = src_len - 1;
    hi = lo + 1 < src_len ? lo + 1 : lo;
    frac = static_cast<float>(pos - lo);
  };
  for (int i = 0; i < target.h; ++i) {
    int y0, y1;
    float fy;
    axis(i, target.h, source.h, y0, y1, fy);
    for (int j = 0; j < target.w; ++j) {
      int x0, x1;
      float fx;
      axis(j, target.w, source.w, x0, x1, fx);
      float* row = m.data() + static_cast<std::size_t>(i * target.w + j) * cols;
      row[y0 * source.w + x0] += (1.0f - fy) * (1.0f - fx);
      row[y0 * source.w + x1] += (1.0f - fy) * fx;
      row[y1 * source.w + x0] += fy * (1.0f - fx);
      row[y1 * source.w + x1] += fy * fx;
    }
  }
  return Tensor({target.count(), source.count()}, std::move(m));
}

Tensor resample_positional(const PositionalEmbedding& pe, GridSize target, PeStrategy strategy) {
  return matmul(resample_matrix(pe.grid, target, strategy), pe.q);
}

Tensor assemble_input(const Tensor& template_tokens, GridSize template_grid, const Tensor& search_tokens,
                      const PositionalEmbedding& pe, const TokenTypeTable& types, std::span<const int> ids,
                      PeStrategy strategy) {
  if (search_tokens.rank() != 2 || search_tokens.dim(0) != pe.grid.count()) {
    throw DimensionError("assemble_input: search tokens do not match the positional grid");
  }
  if (template_tokens.rank() != 2 || template_tokens.dim(0) != template_grid.count()) {
    throw DimensionError("assemble_input: template tokens do not match the template grid");
  }
  const auto total = template_tokens.dim(0) + search_tokens.dim(0);
  if (static_cast<std::int64_t>(ids.size()) != total) {
    throw DimensionError("assemble_input: id sequence length does not match token count");
  }
  for (int id : ids)
    if (id < 0 || id >= kTokenTypeCount) throw ParameterError("assemble_input: invalid token type id");

  auto z = add(template_tokens, resample_positional(pe, template_grid, strategy));
  auto x = add(search_tokens, pe.q);
  return add(concat_rows({z, x}), gather_rows(types.embeddings, ids));
}

}  // namespace lorat
