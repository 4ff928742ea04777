// core/include/confsv/autodiff.h

// Copyright 2026  The confsv Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CONFSV_AUTODIFF_H_
#define CONFSV_AUTODIFF_H_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "confsv/tensor.h"

namespace confsv {

// One recorded operation (or a leaf). Non-leaf nodes keep their parents
// alive, so the graph behind a Var forms the tape for that value.
struct Node {
  Tensor value;
  Tensor grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Pushes this->grad into the parents' grads.
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();  // allocates zeros on first use
};

// Handle to a node. Copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  // Direct access for optimizers and checkpoint loading (leaves only).
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
  std::size_t numel() const { return node_->value.numel(); }
  double item() const { return node_->value.item(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }
  bool is_leaf() const { return node_->parents.empty(); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// While alive on this thread, ops record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Builds an op result. If no parent needs a gradient (or grad recording is
// off) the result is a detached constant and `backward` is dropped.
Var make_op(const char* op, Tensor value, std::vector<Var> parents,
            std::function<void(Node&)> backward);

// Reverse-mode sweep from a scalar loss. Nodes are visited once each in
// reverse topological order; gradients accumulate into leaves that
// require them. Throws ContractError for a non-scalar loss.
void backward(const Var& loss);

// Constant (no-grad) copy of a value.
Var detach(const Var& v);
Var constant(Tensor t);

// ---- elementwise and structural ops -------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var add_bias(const Var& x, const Var& bias);   // bias over the last dim
Var mul_bias(const Var& x, const Var& gain);   // gain over the last dim
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var swish(const Var& a);  // x * sigmoid(x)
Var clamp_min(const Var& a, double lo);

Var sum(const Var& a);   // -> scalar
Var mean(const Var& a);  // -> scalar
Var sum_dim(const Var& a, std::size_t dim, bool keepdim = false);
Var mean_dim(const Var& a, std::size_t dim, bool keepdim = false);
// Repeats a size-1 axis n times.
Var broadcast_dim(const Var& a, std::size_t dim, std::size_t n);

Var reshape(const Var& a, Shape shape);
Var permute(const Var& a, const std::vector<std::size_t>& order);
Var concat(const std::vector<Var>& parts, std::size_t dim);
Var slice(const Var& a, std::size_t dim, std::size_t start, std::size_t length);

}  // namespace confsv

#endif  // CONFSV_AUTODIFF_H_
