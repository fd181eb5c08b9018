#pragma once

#include <vector>

#include "holefill/autograd.hpp"

namespace holefill {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over a fixed list of leaf parameters; updates them in place.
class Adam {
 public:
  Adam(std::vector<ag::Var> params, AdamOptions options);

  void step(const std::vector<Tensor>& grads);
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  double learning_rate() const { return options_.learning_rate; }
  const std::vector<ag::Var>& params() const { return params_; }

 private:
  std::vector<ag::Var> params_;
  AdamOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long steps_ = 0;
};

}  // namespace holefill
