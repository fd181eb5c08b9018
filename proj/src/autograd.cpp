#include "holefill/autograd.hpp"

#include <optional>
#include <unordered_map>
#include <unordered_set>

#include "holefill/ops.hpp"

namespace holefill::ag {
namespace {
thread_local bool g_grad_enabled = true;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  bool any = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) any = any || in.requires_grad();
  }
  if (!any) return Var(std::move(value));
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  return Var(std::move(node));
}

std::vector<Var> grad(const Var& output, std::span<const Var> wrt, bool create_graph) {
  std::vector<Var> result(wrt.size());
  std::unordered_set<const Node*> targets;
  for (const auto& v : wrt) targets.insert(v.node());

  // Post-order over the recorded graph (iterative to survive deep graphs).
  std::vector<Node*> order;
  std::unordered_map<const Node*, bool> needs;
  if (output.requires_grad()) {
    std::unordered_set<const Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{output.node(), 0}};
    visited.insert(output.node());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        Node* child = node->inputs[next++].node();
        if (child && child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        continue;
      }
      bool need = targets.contains(node);
      for (const auto& in : node->inputs) {
        if (in.requires_grad() && needs[in.node()]) need = true;
      }
      needs[node] = need;
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::optional<NoGradGuard> guard;
  if (!create_graph) guard.emplace();

  std::unordered_map<const Node*, Var> grads;
  if (!order.empty() && needs[output.node()]) {
    grads[output.node()] = Var(Tensor::ones_like(output.value()));
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto found = grads.find(node);
    if (found == grads.end() || !node->backward) continue;
    std::vector<bool> needed(node->inputs.size(), false);
    bool any = false;
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      const auto& in = node->inputs[i];
      needed[i] = in.requires_grad() && needs[in.node()];
      any = any || needed[i];
    }
    if (!any) continue;
    const Var g = found->second;
    auto input_grads = node->backward(g, needed);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      if (!needed[i] || !input_grads[i].defined()) continue;
      const Node* key = node->inputs[i].node();
      auto slot = grads.find(key);
      if (slot == grads.end()) {
        grads.emplace(key, input_grads[i]);
      } else {
        slot->second = add(slot->second, input_grads[i]);
      }
    }
  }

  for (std::size_t i = 0; i < wrt.size(); ++i) {
    auto found = grads.find(wrt[i].node());
    result[i] = found != grads.end() ? found->second : Var(Tensor::zeros_like(wrt[i].value()));
  }
  return result;
}

std::vector<Tensor> gradient_values(const Var& output, std::span<const Var> wrt) {
  auto vars = grad(output, wrt, false);
  std::vector<Tensor> out;
  out.reserve(vars.size());
  for (auto& v : vars) out.push_back(v.value());
  return out;
}

}  // namespace holefill::ag
