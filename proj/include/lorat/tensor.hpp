#pragma once

// Minimal f32 tensor with graph-recording reverse-mode autodiff.
//
// A Tensor is a shared handle: copies alias the same storage, `clone()` makes
// an independent copy. Ops never mutate their inputs. Every op output is
// checked for NaN/Inf and raises NumericError instead of propagating them.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace lorat {

using Shape = std::vector<std::int64_t>;
using Rng = std::mt19937_64;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor randn(Shape shape, float stddev, Rng& rng, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::int64_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::int64_t numel() const;

  std::span<const float> data() const;
  /// Direct write access for optimizers and loaders. Bypasses the graph.
  std::span<float> mutable_data();
  float item() const;
  float operator[](std::int64_t i) const { return data()[static_cast<std::size_t>(i)]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const float> grad() const;
  void zero_grad();

  /// Same storage, no graph history, requires_grad off.
  Tensor detach() const;
  Tensor clone() const;
  /// Copies values from `src` (same shape) in place.
  void assign(const Tensor& src);

  /// True when this tensor takes part in gradient recording.
  bool tracked() const;

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// x[N×in] · w[out×in]ᵀ
Tensor matmul_nt(const Tensor& x, const Tensor& w);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
/// x[N×D] + bias[D] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor slice_rows(const Tensor& a, std::int64_t start, std::int64_t count);
Tensor slice_cols(const Tensor& a, std::int64_t start, std::int64_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
/// out[i] = table[ids[i]] for a 2-D table.
Tensor gather_rows(const Tensor& table, std::span<const int> ids);
/// out[i] = a[rows[i]] for a 2-D tensor; rows may repeat.
Tensor select_rows(const Tensor& a, std::span<const std::int64_t> rows);

Tensor softmax(const Tensor& x, std::int64_t axis);
/// Normalizes over the last dimension, then applies gamma/beta.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps);
/// tanh approximation.
Tensor gelu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor abs(const Tensor& x);
/// Mean binary cross-entropy of logits against targets in [0,1].
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

/// Scalar GELU, tanh approximation.
float gelu_scalar(float x);
float softplus_scalar(float x);

// ---- autodiff ---------------------------------------------------------------

/// Populates grad() of every requires_grad leaf reachable from `loss`, then
/// releases the recorded graph.
void backward(const Tensor& loss);

/// Central-difference estimate of d f / d x for every element of x.
Tensor finite_difference_gradient(const std::function<float(const Tensor&)>& f, const Tensor& x,
                                  float h);
/// Same, restricted to `indices`; entries outside are zero.
Tensor finite_difference_gradient(const std::function<float(const Tensor&)>& f, const Tensor& x,
                                  float h, std::span<const std::int64_t> indices);

/// ||a − b||₂ / max(||a||₂, ||b||₂), 0 when both are zero.
double relative_error(std::span<const float> a, std::span<const float> b);

}  // namespace lorat
