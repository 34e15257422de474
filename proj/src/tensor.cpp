#include "lorat/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "lorat/errors.hpp"
#include "lorat/kernels.hpp"

namespace lorat {

namespace detail {

struct Node {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;
  bool requires_grad = false;  // leaf parameter flag
  bool tracked = false;        // leaf with requires_grad, or op output depending on one
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  std::vector<float>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
    return grad;
  }
};

}  // namespace detail

using detail::Node;

namespace {

thread_local bool t_grad_enabled = true;

std::size_t sz(std::int64_t v) { return static_cast<std::size_t>(v); }

void require_finite(std::span<const float> values, const char* what) {
  for (float v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite value");
  }
}

Tensor make_result(Shape shape, std::vector<float> data, const std::vector<Tensor>& inputs,
                   std::function<void(Node&)> backward_fn, const char* op) {
  require_finite(data, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (t_grad_enabled) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.tracked();
    if (any) {
      node->tracked = true;
      for (const auto& t : inputs) node->inputs.push_back(t.node());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

void need_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

void need_rank(const Tensor& t, std::size_t r, const char* op) {
  need_defined(t, op);
  if (t.rank() != r) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                         shape_str(t.shape()));
  }
}

void need_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  need_defined(a, op);
  need_defined(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// Accumulates `g` into input `idx` of `out` if that input is tracked.
template <typename F>
void accumulate(Node& out, std::size_t idx, F&& fill) {
  Node& in = *out.inputs[idx];
  if (!in.tracked) return;
  fill(in.grad_buffer());
}

}  // namespace

// ---- shape helpers ----------------------------------------------------------

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw DimensionError("negative dimension in " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor -----------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<float> data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw DimensionError("tensor: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
  }
  require_finite(data, "tensor");
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
  node_->tracked = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<float>(sz(n), 0.0f), requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<float>(sz(n), value), requires_grad);
}

Tensor Tensor::randn(Shape shape, float stddev, Rng& rng, bool requires_grad) {
  const auto n = shape_numel(shape);
  std::normal_distribution<float> dist(0.0f, stddev);
  std::vector<float> v(sz(n));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  static const Shape empty;
  return node_ ? node_->shape : empty;
}

std::int64_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw DimensionError("dim: axis out of range");
  return shape()[axis];
}

std::int64_t Tensor::numel() const { return node_ ? static_cast<std::int64_t>(node_->data.size()) : 0; }

std::span<const float> Tensor::data() const {
  if (!node_) return {};
  return node_->data;
}

std::span<float> Tensor::mutable_data() {
  if (!node_) throw ContractError("mutable_data: undefined tensor");
  return node_->data;
}

float Tensor::item() const {
  if (numel() != 1) throw ContractError("item: tensor has " + std::to_string(numel()) + " values");
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!node_) throw ContractError("set_requires_grad: undefined tensor");
  if (node_->backward_fn) throw ContractError("set_requires_grad: only leaves can be flagged");
  node_->requires_grad = on;
  node_->tracked = on;
  if (!on) node_->grad.clear();
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const float> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const {
  need_defined(*this, "detach");
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->data = node_->data;
  return Tensor(std::move(node));
}

Tensor Tensor::clone() const {
  need_defined(*this, "clone");
  return Tensor(node_->shape, node_->data, node_->requires_grad);
}

void Tensor::assign(const Tensor& src) {
  need_same_shape(*this, src, "assign");
  std::copy(src.data().begin(), src.data().end(), node_->data.begin());
}

bool Tensor::tracked() const { return node_ && node_->tracked; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_mode_enabled() { return t_grad_enabled; }

// ---- linear algebra -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  need_rank(a, 2, "matmul");
  need_rank(b, 2, "matmul");
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dims disagree " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<float> out(sz(m * n));
  kernels::gemm_nn(a.data(), b.data(), out, m, k, n);
  return make_result({m, n}, std::move(out), {a, b},
                     [m, k, n](Node& o) {
                       const auto& A = o.inputs[0]->data;
                       const auto& B = o.inputs[1]->data;
                       std::vector<float> tmp;
                       accumulate(o, 0, [&](std::vector<float>& g) {
                         tmp.resize(sz(m * k));
                         kernels::gemm_nt(o.grad, B, tmp, m, n, k);  // dA = dC·Bᵀ
                         for (std::size_t i = 0; i < tmp.size(); ++i) g[i] += tmp[i];
                       });
                       accumulate(o, 1, [&](std::vector<float>& g) {
                         tmp.resize(sz(k * n));
                         kernels::gemm_tn(A, o.grad, tmp, k, m, n);  // dB = Aᵀ·dC
                         for (std::size_t i = 0; i < tmp.size(); ++i) g[i] += tmp[i];
                       });
                     },
                     "matmul");
}

Tensor matmul_nt(const Tensor& x, const Tensor& w) {
  need_rank(x, 2, "matmul_nt");
  need_rank(w, 2, "matmul_nt");
  const auto m = x.dim(0), k = x.dim(1), n = w.dim(0);
  if (w.dim(1) != k) {
    throw DimensionError("matmul_nt: inner dims disagree " + shape_str(x.shape()) + " x " +
                         shape_str(w.shape()) + "^T");
  }
  std::vector<float> out(sz(m * n));
  kernels::gemm_nt(x.data(), w.data(), out, m, k, n);
  return make_result({m, n}, std::move(out), {x, w},
                     [m, k, n](Node& o) {
                       const auto& X = o.inputs[0]->data;
                       const auto& W = o.inputs[1]->data;
                       std::vector<float> tmp;
                       accumulate(o, 0, [&](std::vector<float>& g) {
                         tmp.resize(sz(m * k));
                         kernels::gemm_nn(o.grad, W, tmp, m, n, k);  // dX = dY·W
                         for (std::size_t i = 0; i < tmp.size(); ++i) g[i] += tmp[i];
                       });
                       accumulate(o, 1, [&](std::vector<float>& g) {
                         tmp.resize(sz(n * k));
                         kernels::gemm_tn(o.grad, X, tmp, n, m, k);  // dW = dYᵀ·X
                         for (std::size_t i = 0; i < tmp.size(); ++i) g[i] += tmp[i];
                       });
                     },
                     "matmul_nt");
}

Tensor transpose(const Tensor& a) {
  need_rank(a, 2, "transpose");
  const auto r = a.dim(0), c = a.dim(1);
  std::vector<float> out(sz(r * c));
  kernels::transpose(a.data(), out, r, c);
  return make_result({c, r}, std::move(out), {a},
                     [r, c](Node& o) {
                       accumulate(o, 0, [&](std::vector<float>& g) {
                         for (std::int64_t i = 0; i < r; ++i)
                           for (std::int64_t j = 0; j < c; ++j) g[sz(i * c + j)] += o.grad[sz(j * r + i)];
                       });
                     },
                     "transpose");
}

// ---- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  need_same_shape(a, b, "add");
  std::vector<float> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return make_result(a.shape(), std::move(out), {a, b},
                     [](Node& o) {
                       for (std::size_t idx = 0; idx < 2; ++idx)
                         accumulate(o, idx, [&](std::vector<float>& g) {
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                         });
                     },
                     "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  need_same_shape(a, b, "sub");
  std::vector<float> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  return make_result(a.shape(), std::move(out), {a, b},
                     [](Node& o) {
                       accumulate(o, 0, [&](std::vector<float>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                       });
                       accumulate(o, 1, [&](std::vector<float>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
                       });
                     },
                     "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  need_same_shape(a, b, "mul");
  std::vector<float> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  kernels::add_multiplies(out.size());
  return make_result(a.shape(), std::move(out), {a, b},
                     [](Node& o) {
                       const auto& A = o.inputs[0]->data;
                       const auto& B = o.inputs[1]->data;
                       accumulate(o, 0, [&](std::vector<float>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * B[i];
                       });
                       accumulate(o, 1, [&](std::vector<float>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * A[i];
                       });
                     },
                     "mul");
}

Tensor scale(const Tensor& a, float s) {
  need_defined(a, "scale");
  std::vector<float> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  kernels::add_multiplies(out.size());
  return make_result(a.shape(), std::move(out), {a},
                     [s](Node& o) {
                       accumulate(o, 0, [&](std::vector<float>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * s;
                       });
                     },
                     "scale");
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  need_rank(x, 2, "add_bias");
  need_rank(bias, 1, "add_bias");
  const auto rows = x.dim(0), cols = x.dim(1);
  if (bias.dim(0) != cols) throw DimensionError("add_bias: bias length does not match columns");
  std::vector<float> out(x.data().begin(), x.data().end());
  const auto bd = bias.data();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) out[sz(r * cols + c)] += bd[sz(c)];
  return make_result(x.shape(), std::move(out), {x, bias},
                     [rows, cols](Node& o) {
                       accumulate(o, 0, [&](std::vector<float>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                       });
                       accumulate(o, 1, [&](std::vector<float>& g) {
                         for (std::int64_t r = 0; r < rows; ++r)
                           for (std::int64_t c = 0; c < cols; ++c) g[sz(c)] += o.grad[sz(r * cols + c)];
                       });
                     },
                     "add_bias");
}

// ---- reductions and reshaping ------------------------------------------------------

Tensor sum(const Tensor& a) {
  need_defined(a, "sum");
  float total = 0.0f;
  for (float v : a.data()) total += v;
  return make_result({}, {total}, {a},
                     [](Node& o) {
                       accumulate(o, 0, [&](std::vector<float>& g) {
                         for (auto& v : g) v += o.grad[0];
                       });
                     },
                     "sum");
}

Tensor mean(const Tensor& a) {
  need_defined(a, "mean");
  if (a.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(a), 1.0f / static_cast<float>(a.numel()));
}

Tensor reshape(const Tensor& a, Shape shape) {
  need_defined(a, "reshape");
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<float> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {a},
                     [](Node& o) {
                       accumulate(o, 0, [&](std::vector<float>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                       });
                     },
                     "reshape");
}

Tensor slice_rows(const Tensor& a, std::int64_t start, std::int64_t count) {
  need_rank(a, 2, "slice_rows");
  const auto rows = a.dim(0), cols = a.dim(1);
  if (start < 0 || count < 0 || start + count > rows) throw DimensionError("slice_rows: out of range");
  const auto d = a.data();
  std::vector<float> out(d.begin() + start * cols, d.begin() + (start + count) * cols);
  return make_result({count, cols}, std::move(out), {a},
                     [start, cols](Node& o) {
                       accumulate(o, 0, [&](std::vector<float>& g) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) g[sz(start * cols) + i] += o.grad[i];
                       });
                     },
                     "slice_rows");
}

Tensor slice_cols(const Tensor& a, std::int64_t start, std::int64_t count) {
  need_rank(a, 2, "slice_cols");
  const auto rows = a.dim(0), cols = a.dim(1);
  if (start < 0 || count < 0 || start + count > cols) throw DimensionError("slice_cols: out of range");
  const auto d = a.data();
  std::vector<float> out(sz(rows * count));
  for (std::int64_t r = 0; r < rows; ++r)
    std::copy_n(d.begin() + r * cols + start, count, out.begin() + r * count);
  return make_result({rows, count}, std::move(out), {a},
                     [rows, cols, start, count](Node& o) {
                       accumulate(o, 0, [&](std::vector<float>& g) {
                         for (std::int64_t r = 0; r < rows; ++r)
                           for (std::int64_t c = 0; c < count; ++c)
                             g[sz(r * cols + start + c)] += o.grad[sz(r * count + c)];
                       });
                     },
                     "slice_cols");
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const auto cols = parts.front().rank() == 2 ? parts.front().dim(1) : -1;
  std::int64_t rows = 0;
  for (const auto& p : parts) {
    need_rank(p, 2, "concat_rows");
    if (p.dim(1) != cols) throw DimensionError("concat_rows: column mismatch");
    rows += p.dim(0);
  }
  std::vector<float> out;
  out.reserve(sz(rows * cols));
  std::vector<std::int64_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(static_cast<std::int64_t>(out.size()));
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return make_result({rows, cols}, std::move(out), parts,
                     [offsets](Node& o) {
                       for (std::size_t idx = 0; idx < o.inputs.size(); ++idx)
                         accumulate(o, idx, [&](std::vector<float>& g) {
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[sz(offsets[idx]) + i];
                         });
                     },
                     "concat_rows");
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const auto rows = parts.front().rank() == 2 ? parts.front().dim(0) : -1;
  std::int64_t cols = 0;
  std::vector<std::int64_t> col_offsets;
  for (const auto& p : parts) {
    need_rank(p, 2, "concat_cols");
    if (p.dim(0) != rows) throw DimensionError("concat_cols: row mismatch");
    col_offsets.push_back(cols);
    cols += p.dim(1);
  }
  std::vector<float> out(sz(rows * cols));
  for (std::size_t idx = 0; idx < parts.size(); ++idx) {
    const auto w = parts[idx].dim(1);
    const auto d = parts[idx].data();
    for (std::int64_t r = 0; r < rows; ++r)
      std::copy_n(d.begin() + r * w, w, out.begin() + r * cols + col_offsets[idx]);
  }
  return make_result({rows, cols}, std::move(out), parts,
                     [rows, cols, col_offsets](Node& o) {
                       for (std::size_t idx = 0; idx < o.inputs.size(); ++idx)
                         accumulate(o, idx, [&](std::vector<float>& g) {
                           const auto w = o.inputs[idx]->shape[1];
                           for (std::int64_t r = 0; r < rows; ++r)
                             for (std::int64_t c = 0; c < w; ++c)
                               g[sz(r * w + c)] += o.grad[sz(r * cols + col_offsets[idx] + c)];
                         });
                     },
                     "concat_cols");
}

Tensor select_rows(const Tensor& a, std::span<const std::int64_t> rows_in) {
  need_rank(a, 2, "select_rows");
  const auto rows = a.dim(0), cols = a.dim(1);
  std::vector<std::int64_t> rows_sel(rows_in.begin(), rows_in.end());
  std::vector<float> out(rows_sel.size() * sz(cols));
  const auto d = a.data();
  for (std::size_t i = 0; i < rows_sel.size(); ++i) {
    const auto r = rows_sel[i];
    if (r < 0 || r >= rows) throw DimensionError("select_rows: row index out of range");
    std::copy_n(d.begin() + r * cols, cols, out.begin() + static_cast<std::int64_t>(i) * cols);
  }
  const auto n = static_cast<std::int64_t>(rows_sel.size());
  return make_result({n, cols}, std::move(out), {a},
                     [rows_sel, cols](Node& o) {
                       accumulate(o, 0, [&](std::vector<float>& g) {
                         for (std::size_t i = 0; i < rows_sel.size(); ++i)
                           for (std::int64_t c = 0; c < cols; ++c)
                             g[sz(rows_sel[i] * cols + c)] += o.grad[i * sz(cols) + sz(c)];
                       });
                     },
                     "select_rows");
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  std::vector<std::int64_t> rows(ids.begin(), ids.end());
  return select_rows(table, rows);
}

// ---- nonlinearities -----------------------------------------------------------------

Tensor softmax(const Tensor& x, std::int64_t axis) {
  need_defined(x, "softmax");
  const auto r = static_cast<std::int64_t>(x.rank());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("softmax: axis out of range");
  const auto& shape = x.shape();
  const auto len = shape[sz(axis)];
  if (len == 0) throw DimensionError("softmax: empty axis");
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t i = 0; i < axis; ++i) outer *= shape[sz(i)];
  for (std::int64_t i = axis + 1; i < r; ++i) inner *= shape[sz(i)];

  const auto d = x.data();
  std::vector<float> out(d.size());
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t in = 0; in < inner; ++in) {
      const auto base = o * len * inner + in;
      float mx = d[sz(base)];
      for (std::int64_t t = 1; t < len; ++t) mx = std::max(mx, d[sz(base + t * inner)]);
      float total = 0.0f;
      for (std::int64_t t = 0; t < len; ++t) {
        const float e = std::exp(d[sz(base + t * inner)] - mx);
        out[sz(base + t * inner)] = e;
        total += e;
      }
      for (std::int64_t t = 0; t < len; ++t) out[sz(base + t * inner)] /= total;
    }
  return make_result(shape, std::move(out), {x},
                     [outer, inner, len](Node& o) {
                       accumulate(o, 0, [&](std::vector<float>& g) {
                         const auto& y = o.data;
                         for (std::int64_t a = 0; a < outer; ++a)
                           for (std::int64_t in = 0; in < inner; ++in) {
                             const auto base = a * len * inner + in;
                             float dot = 0.0f;
                             for (std::int64_t t = 0; t < len; ++t) {
                               const auto i = sz(base + t * inner);
                               dot += o.grad[i] * y[i];
                             }
                             for (std::int64_t t = 0; t < len; ++t) {
                               const auto i = sz(base + t * inner);
                               g[i] += y[i] * (o.grad[i] - dot);
                             }
                           }
                       });
                     },
                     "softmax");
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  need_defined(x, "layernorm");
  if (!(eps > 0.0f)) throw ParameterError("layernorm: eps must be positive");
  if (x.rank() == 0) throw DimensionError("layernorm: scalar input");
  const auto cols = x.shape().back();
  need_rank(gamma, 1, "layernorm");
  need_rank(beta, 1, "layernorm");
  if (gamma.dim(0) != cols || beta.dim(0) != cols) {
    throw DimensionError("layernorm: gamma/beta do not match last dim");
  }
  const auto rows = x.numel() / cols;
  const auto d = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  std::vector<float> out(d.size());
  std::vector<float> xhat(d.size());
  std::vector<float> inv_std(sz(rows));
  const float n = static_cast<float>(cols);
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* row = d.data() + r * cols;
    float mu = 0.0f;
    for (std::int64_t c = 0; c < cols; ++c) mu += row[c];
    mu /= n;
    float var = 0.0f;
    for (std::int64_t c = 0; c < cols; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= n;
    const float is = 1.0f / std::sqrt(var + eps);
    inv_std[sz(r)] = is;
    for (std::int64_t c = 0; c < cols; ++c) {
      const auto i = sz(r * cols + c);
      xhat[i] = (row[c] - mu) * is;
      out[i] = xhat[i] * gd[sz(c)] + bd[sz(c)];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& o) {
                       const auto& G = o.inputs[1]->data;
                       accumulate(o, 0, [&](std::vector<float>& g) {
                         const float n = static_cast<float>(cols);
                         for (std::int64_t r = 0; r < rows; ++r) {
                           float m1 = 0.0f, m2 = 0.0f;
                           for (std::int64_t c = 0; c < cols; ++c) {
                             const auto i = sz(r * cols + c);
                             const float dxh = o.grad[i] * G[sz(c)];
                             m1 += dxh;
                             m2 += dxh * xhat[i];
                           }
                           m1 /= n;
                           m2 /= n;
                           for (std::int64_t c = 0; c < cols; ++c) {
                             const auto i = sz(r * cols + c);
                             const float dxh = o.grad[i] * G[sz(c)];
                             g[i] += inv_std[sz(r)] * (dxh - m1 - xhat[i] * m2);
                           }
                         }
                       });
                       accumulate(o, 1, [&](std::vector<float>& g) {
                         for (std::int64_t r = 0; r < rows; ++r)
                           for (std::int64_t c = 0; c < cols; ++c) {
                             const auto i = sz(r * cols + c);
                             g[sz(c)] += o.grad[i] * xhat[i];
                           }
                       });
                       accumulate(o, 2, [&](std::vector<float>& g) {
                         for (std::int64_t r = 0; r < rows; ++r)
                           for (std::int64_t c = 0; c < cols; ++c) g[sz(c)] += o.grad[sz(r * cols + c)];
                       });
                     },
                     "layernorm");
}

namespace {
constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluK = 0.044715f;
}  // namespace

float gelu_scalar(float x) {
  const float inner = kGeluC * (x + kGeluK * x * x * x);
  return 0.5f * x * (1.0f + std::tanh(inner));
}

float softplus_scalar(float x) { return std::max(x, 0.0f) + std::log1p(std::exp(-std::fabs(x))); }

Tensor gelu(const Tensor& x) {
  need_defined(x, "gelu");
  std::vector<float> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = gelu_scalar(v);
  return make_result(x.shape(), std::move(out), {x},
                     [](Node& o) {
                       const auto& X = o.inputs[0]->data;
                       accumulate(o, 0, [&](std::vector<float>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           const float v = X[i];
                           const float t = std::tanh(kGeluC * (v + kGeluK * v * v * v));
                           const float dinner = kGeluC * (1.0f + 3.0f * kGeluK * v * v);
                           const float d = 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * dinner;
                           g[i] += o.grad[i] * d;
                         }
                       });
                     },
                     "gelu");
}

Tensor softplus(const Tensor& x) {
  need_defined(x, "softplus");
  std::vector<float> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = softplus_scalar(v);
  return make_result(x.shape(), std::move(out), {x},
                     [](Node& o) {
                       const auto& X = o.inputs[0]->data;
                       accumulate(o, 0, [&](std::vector<float>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += o.grad[i] / (1.0f + std::exp(-X[i]));
                       });
                     },
                     "softplus");
}

Tensor abs(const Tensor& x) {
  need_defined(x, "abs");
  std::vector<float> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = std::fabs(v);
  return make_result(x.shape(), std::move(out), {x},
                     [](Node& o) {
                       const auto& X = o.inputs[0]->data;
                       accumulate(o, 0, [&](std::vector<float>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           const float s = X[i] > 0.0f ? 1.0f : (X[i] < 0.0f ? -1.0f : 0.0f);
                           g[i] += o.grad[i] * s;
                         }
                       });
                     },
                     "abs");
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  need_same_shape(logits, targets, "bce_with_logits");
  if (logits.numel() == 0) throw DimensionError("bce_with_logits: empty input");
  const auto z = logits.data();
  const auto y = targets.data();
  float total = 0.0f;
  for (std::size_t i = 0; i < z.size(); ++i)
    total += std::max(z[i], 0.0f) - z[i] * y[i] + std::log1p(std::exp(-std::fabs(z[i])));
  const float n = static_cast<float>(z.size());
  return make_result({}, {total / n}, {logits, targets},
                     [n](Node& o) {
                       const auto& Z = o.inputs[0]->data;
                       const auto& Y = o.inputs[1]->data;
                       const float up = o.grad[0] / n;
                       accumulate(o, 0, [&](std::vector<float>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += up * (1.0f / (1.0f + std::exp(-Z[i])) - Y[i]);
                       });
                       accumulate(o, 1, [&](std::vector<float>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] -= up * Z[i];
                       });
                     },
                     "bce_with_logits");
}

// ---- autodiff -----------------------------------------------------------------------

void backward(const Tensor& loss) {
  need_defined(loss, "backward");
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  const auto& root = loss.node();
  if (!root->tracked || !root->backward_fn) {
    throw ContractError("backward: no recorded computation graph");
  }

  // Iterative post-order DFS gives a topological order (inputs before outputs).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->tracked && child->backward_fn && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad.assign(1, 1.0f);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->grad.empty()) n->backward_fn(*n);
  }
  // Consume the graph; leaves keep their accumulated gradients.
  for (Node* n : order) {
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->inputs.clear();
    n->backward_fn = nullptr;
    n->tracked = false;
  }
}

Tensor finite_difference_gradient(const std::function<float(const Tensor&)>& f, const Tensor& x,
                                  float h, std::span<const std::int64_t> indices) {
  need_defined(x, "finite_difference_gradient");
  if (!(h > 0.0f)) throw ParameterError("finite_difference_gradient: step must be positive");
  NoGradGuard guard;
  Tensor probe = x;  // shares storage so `f` sees the perturbation
  auto values = probe.mutable_data();
  std::vector<float> out(values.size(), 0.0f);
  for (auto idx : indices) {
    if (idx < 0 || idx >= x.numel()) throw DimensionError("finite_difference_gradient: bad index");
    const auto i = sz(idx);
    const float original = values[i];
    const float up = original + h;
    const float down = original - h;
    values[i] = up;
    const float fp = f(probe);
    values[i] = down;
    const float fm = f(probe);
    values[i] = original;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_difference_gradient: non-finite function value");
    }
    out[i] = static_cast<float>((static_cast<double>(fp) - fm) /
                                (static_cast<double>(up) - static_cast<double>(down)));
  }
  return Tensor(x.shape(), std::move(out));
}

Tensor finite_difference_gradient(const std::function<float(const Tensor&)>& f, const Tensor& x,
                                  float h) {
  std::vector<std::int64_t> all(sz(x.numel()));
  std::iota(all.begin(), all.end(), 0);
  return finite_difference_gradient(f, x, h, all);
}

double relative_error(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw DimensionError("relative_error: length mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    diff += d * d;
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

}  // namespace lorat
