#include "bpa/nn/autograd.hpp"

#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "bpa/nn/ops.hpp"

namespace bpa::nn {
namespace {
thread_local bool t_grad_enabled = true;
}  // namespace

Var Var::constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

const Tensor& Var::value() const {
  if (!node_) throw std::logic_error("access to undefined Var");
  return node_->value;
}

Tensor& Var::mutable_value() {
  if (!node_) throw std::logic_error("access to undefined Var");
  if (!node_->is_leaf) throw std::logic_error("mutable_value() on non-leaf Var");
  return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

bool grad_enabled() { return t_grad_enabled; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(t_grad_enabled) { t_grad_enabled = enabled; }
GradModeGuard::~GradModeGuard() { t_grad_enabled = previous_; }

Var make_op(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  n->is_leaf = false;
  if (t_grad_enabled) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        n->requires_grad = true;
        break;
      }
    }
  }
  if (n->requires_grad) {
    n->inputs = std::move(inputs);
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

std::vector<Var> grad(const Var& output, const std::vector<Var>& inputs, const Var& grad_output, bool create_graph) {
  Var seed = grad_output;
  if (!seed.defined()) {
    if (output.numel() != 1) {
      throw std::invalid_argument("grad(): grad_output required for non-scalar output " + shape_str(output.shape()));
    }
    seed = Var::constant(Tensor(output.shape(), 1.0));
  } else if (seed.shape() != output.shape()) {
    throw std::invalid_argument("grad(): grad_output shape mismatch");
  }

  // Reverse topological order over nodes that require grad.
  std::vector<Node*> order;
  if (output.requires_grad()) {
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(output.node(), 0);
    visited.insert(output.node());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        Node* child = node->inputs[next++].node();
        if (child && child->requires_grad && visited.insert(child).second) {
          stack.emplace_back(child, 0);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::unordered_set<Node*> wanted;
  for (const auto& in : inputs) wanted.insert(in.node());

  std::unordered_map<Node*, Var> acc;
  if (output.requires_grad()) acc.emplace(output.node(), seed);

  GradModeGuard mode(create_graph);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto found = acc.find(node);
    if (found == acc.end() || !node->backward) continue;
    Var g = found->second;
    if (!wanted.contains(node)) acc.erase(found);
    std::vector<Var> partials = node->backward(*node, g);
    for (size_t i = 0; i < node->inputs.size() && i < partials.size(); ++i) {
      const Var& in = node->inputs[i];
      if (!in.requires_grad() || !partials[i].defined()) continue;
      auto [slot, inserted] = acc.try_emplace(in.node(), partials[i]);
      if (!inserted) slot->second = add(slot->second, partials[i]);
    }
  }

  std::vector<Var> result;
  result.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto found = acc.find(in.node());
    if (found != acc.end()) {
      result.push_back(found->second);
    } else {
      result.push_back(Var::constant(Tensor(in.shape(), 0.0)));
    }
  }
  return result;
}

}  // namespace bpa::nn
