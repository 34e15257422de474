#include "lorat/optim.hpp"

#include <cmath>

#include "lorat/errors.hpp"

namespace lorat {

Adam::Adam(std::vector<Tensor> params, AdamOptions options) : params_(std::move(params)), opt_(options) {
  if (opt_.lr < 0.0f) throw ParameterError("adam: negative learning rate");
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0f);
    v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  const float c1 = 1.0f - std::pow(opt_.beta1, static_cast<float>(t_));
  const float c2 = 1.0f - std::pow(opt_.beta2, static_cast<float>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = opt_.beta1 * m[i] + (1.0f - opt_.beta1) * g[i];
      v[i] = opt_.beta2 * v[i] + (1.0f - opt_.beta2) * g[i] * g[i];
      const float update = opt_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.eps);
      w[i] -= update;
      if (!std::isfinite(w[i])) throw NumericError("adam: parameter diverged");
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace lorat
