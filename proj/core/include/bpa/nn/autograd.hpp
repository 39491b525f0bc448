#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "bpa/nn/tensor.hpp"

namespace bpa::nn {

struct Node;

// Handle to a node of the dynamic computation graph. Cheap to copy; copies
// alias the same node.
class Var {
 public:
  Var() = default;

  static Var constant(Tensor value);
  static Var leaf(Tensor value, bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  // Only leaves may be mutated; used by optimizers and checkpoint loading.
  Tensor& mutable_value();
  const Shape& shape() const { return value().shape(); }
  int64_t numel() const { return value().numel(); }
  bool requires_grad() const;
  double item() const { return value().item(); }

  Node* node() const { return node_.get(); }

 private:
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;

  friend Var make_op(const char*, Tensor, std::vector<Var>, std::function<std::vector<Var>(const Node&, const Var&)>);
};

// Returns one vector-Jacobian product per input (undefined Var for inputs that
// do not need one). Must be written in terms of differentiable ops so that
// second-order gradients work when the graph is recorded.
using BackwardFn = std::function<std::vector<Var>(const Node& self, const Var& grad)>;

struct Node {
  Tensor value;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<Var> inputs;
  BackwardFn backward;
  const char* op = "leaf";
};

bool grad_enabled();

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

class NoGradGuard : public GradModeGuard {
 public:
  NoGradGuard() : GradModeGuard(false) {}
};

// Records an op node when grad mode is on and any input requires grad;
// otherwise returns a constant.
Var make_op(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

// Gradients of `output` with respect to each of `inputs`. `grad_output`
// defaults to ones and is required when output is not a scalar. With
// create_graph the returned gradients are themselves differentiable.
// Inputs not connected to the output receive zeros.
std::vector<Var> grad(const Var& output, const std::vector<Var>& inputs, const Var& grad_output = {},
                      bool create_graph = false);

}  // namespace bpa::nn
