#pragma once

#include <vector>

#include "lorat/tensor.hpp"

namespace lorat {

struct AdamOptions {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Adam over a fixed parameter list. Parameters without a gradient are skipped.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  void step();
  void zero_grad();
  int steps() const { return t_; }
  float lr() const { return opt_.lr; }
  void set_lr(float lr) { opt_.lr = lr; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  AdamOptions opt_;
  int t_ = 0;
};

}  // namespace lorat
