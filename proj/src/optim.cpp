#include "holefill/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace holefill {

Adam::Adam(std::vector<ag::Var> params, AdamOptions options) : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros_like(p.value()));
    v_.push_back(Tensor::zeros_like(p.value()));
  }
}

void Adam::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size()) throw std::invalid_argument("Adam::step: gradient count mismatch");
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& value = params_[i].mutable_value();
    const Tensor& g = grads[i];
    require_same_shape(value, g, "Adam::step");
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      value[k] -= options_.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + options_.eps);
    }
  }
}

}  // namespace holefill
