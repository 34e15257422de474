#pragma once

// One-stream input construction: patch tokens, token-type embeddings that
// mark template foreground / template background / search, and a single 1-D
// absolute positional embedding shared by both images.

#include <span>
#include <vector>

#include "lorat/bbox.hpp"
#include "lorat/config.hpp"
#include "lorat/tensor.hpp"

namespace lorat {

/// Token grid extents (rows × columns).
struct GridSize {
  int h = 0;
  int w = 0;
  int count() const { return h * w; }
  bool operator==(const GridSize&) const = default;
};

/// 1-D absolute embedding `q` [L×D] viewed as an h×w grid of D-vectors (row-major).
/// The grid is the search region's native grid, so search tokens use it verbatim.
struct PositionalEmbedding {
  Tensor q;
  GridSize grid;

  PositionalEmbedding() = default;
  PositionalEmbedding(Tensor table, GridSize grid);

  std::int64_t dim() const { return q.dim(1); }
  /// Row of Q_2d at (i, j).
  std::span<const float> at(int i, int j) const;
};

enum class TokenType : int { TemplateForeground = 0, TemplateBackground = 1, Search = 2 };
inline constexpr int kTokenTypeCount = 3;

struct TokenTypeTable {
  Tensor embeddings;  // [3×D], trainable

  TokenTypeTable() = default;
  explicit TokenTypeTable(Tensor table);
};

struct TokenTypeIds {
  std::vector<int> ids;  // template tokens first, then search tokens
  int foreground = 0;
  bool degenerate_box = false;  // zero-area box: no foreground, caller should warn
};

/// [N × C·P·P]; patches in row-major grid order, each flattened channel, row, column.
Tensor patchify(const Tensor& image, int patch);

/// patchify(image) · proj, proj is [(C·P·P)×D].
Tensor patch_embed(const Tensor& image, const Tensor& proj, int patch);

/// Template token is foreground iff its patch center lies in `box` (half-open).
/// `box` is in template-image pixels and must lie inside the template image.
TokenTypeIds token_type_ids(GridSize template_grid, GridSize search_grid, const BBox& box,
                            int patch);

/// [(target)×(source)] matrix M so that M · q resamples the positional grid.
/// Interpolate is bilinear with the align-corners convention; Slice takes the
/// top-left sub-grid.
Tensor resample_matrix(GridSize source, GridSize target, PeStrategy strategy);

/// Differentiable with respect to pe.q.
Tensor resample_positional(const PositionalEmbedding& pe, GridSize target, PeStrategy strategy);

/// Rows: template tokens + resampled positions, then search tokens + Q_2d,
/// each plus the type embedding selected by `ids`.
Tensor assemble_input(const Tensor& template_tokens, GridSize template_grid,
                      const Tensor& search_tokens, const PositionalEmbedding& pe,
                      const TokenTypeTable& types, std::span<const int> ids, PeStrategy strategy);

}  // namespace lorat
