#pragma once

// Tape-free reverse-mode autodiff over Tensor values.
//
// Every op records its inputs and a backward closure that is itself written in
// terms of differentiable ops. Running backward with create_graph=true
// therefore yields gradients that can be differentiated again, which is what
// the gradient penalty needs (gradient of a norm of a gradient).

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "holefill/tensor.hpp"

namespace holefill::ag {

class Var;

// Receives the gradient of the op output and a flag per input telling which
// input gradients are needed; returns one Var per input (undefined when not
// needed).
using BackwardFn = std::function<std::vector<Var>(const Var& grad_output, const std::vector<bool>& needed)>;

struct Node {
  Tensor value;
  bool requires_grad = false;
  std::vector<Var> inputs;
  BackwardFn backward;
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  // Leaves only (parameters being optimised); never mutate an op result.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  double item() const { return node_->value.item(); }
  Node* node() const { return node_.get(); }

  // Same value, no history.
  Var detach() const { return Var(node_->value); }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an op result. History is kept only when grad mode is on and at least
// one input requires grad.
Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn backward);

// Gradients of `output` (summed over its elements) with respect to `wrt`.
// Inputs not reachable from the output receive zeros.
std::vector<Var> grad(const Var& output, std::span<const Var> wrt, bool create_graph = false);

std::vector<Tensor> gradient_values(const Var& output, std::span<const Var> wrt);

}  // namespace holefill::ag
