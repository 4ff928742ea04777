// core/src/autodiff.cc

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

#include "confsv/autodiff.h"

#include <cmath>
#include <unordered_set>

#include "confsv/error.h"

namespace confsv {

namespace {

thread_local bool g_grad_enabled = true;

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Splits a shape around one axis into (outer, n, inner).
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};
AxisSplit split_axis(const Shape& s, std::size_t dim) {
  if (dim >= s.size()) {
    throw DimensionError("axis " + std::to_string(dim) + " out of range for " +
                         shape_str(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < dim; ++i) r.outer *= s[i];
  r.n = s[dim];
  for (std::size_t i = dim + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <typename Fwd, typename Deriv>
Var unary(const char* name, const Var& a, Fwd fwd, Deriv deriv) {
  Tensor out(a.shape());
  const auto& x = a.value().storage();
  auto& y = out.storage();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = fwd(x[i]);
  return make_op(name, std::move(out), {a}, [deriv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer().storage();
    const auto& x = p.value.storage();
    const auto& y = self.value.storage();
    const auto& gy = self.grad.storage();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty() || grad.numel() != value.numel()) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var make_op(const char* op, Tensor value, std::vector<Var> parents,
            std::function<void(Node&)> backward) {
  Var out(std::move(value), false);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const Var& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  Node& n = *out.node();
  n.requires_grad = true;
  n.op = op;
  n.parents.reserve(parents.size());
  for (const Var& p : parents) n.parents.push_back(p.node());
  n.backward = std::move(backward);
  return out;
}

void backward(const Var& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS -> topological order (parents before children).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Node& root = *loss.node();
  root.grad_buffer().storage()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->parents.empty() || !n->backward) continue;
    if (!n->grad.empty()) n->backward(*n);
    n->grad = Tensor();  // intermediate gradients are not kept
  }
}

Var detach(const Var& v) { return Var(v.value(), false); }
Var constant(Tensor t) { return Var(std::move(t), false); }

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  auto& y = out.storage();
  const auto& bv = b.value().storage();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return make_op("add", std::move(out), {a, b}, [](Node& self) {
    const auto& gy = self.grad.storage();
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer().storage();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  auto& y = out.storage();
  const auto& bv = b.value().storage();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return make_op("sub", std::move(out), {a, b}, [](Node& self) {
    const auto& gy = self.grad.storage();
    for (std::size_t k = 0; k < 2; ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      const double sign = k == 0 ? 1.0 : -1.0;
      auto& g = p.grad_buffer().storage();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * gy[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  auto& y = out.storage();
  const auto& bv = b.value().storage();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return make_op("mul", std::move(out), {a, b}, [](Node& self) {
    const auto& gy = self.grad.storage();
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer().storage();
      const auto& other = pb.value.storage();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * other[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer().storage();
      const auto& other = pa.value.storage();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * other[i];
    }
  });
}

Var scale(const Var& a, double c) {
  return unary("scale", a, [c](double x) { return c * x; },
               [c](double, double) { return c; });
}

Var add_scalar(const Var& a, double c) {
  return unary("add_scalar", a, [c](double x) { return x + c; },
               [](double, double) { return 1.0; });
}

Var add_bias(const Var& x, const Var& bias) {
  const std::size_t c = bias.numel();
  if (x.shape().empty() || x.shape().back() != c) {
    throw DimensionError("add_bias: bias of " + std::to_string(c) +
                         " does not match " + shape_str(x.shape()));
  }
  Tensor out = x.value();
  auto& y = out.storage();
  const auto& b = bias.value().storage();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i % c];
  return make_op("add_bias", std::move(out), {x, bias}, [c](Node& self) {
    const auto& gy = self.grad.storage();
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->grad_buffer().storage();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->grad_buffer().storage();
      for (std::size_t i = 0; i < gy.size(); ++i) g[i % c] += gy[i];
    }
  });
}

Var mul_bias(const Var& x, const Var& gain) {
  const std::size_t c = gain.numel();
  if (x.shape().empty() || x.shape().back() != c) {
    throw DimensionError("mul_bias: gain of " + std::to_string(c) +
                         " does not match " + shape_str(x.shape()));
  }
  Tensor out = x.value();
  auto& y = out.storage();
  const auto& w = gain.value().storage();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= w[i % c];
  return make_op("mul_bias", std::move(out), {x, gain}, [c](Node& self) {
    const auto& gy = self.grad.storage();
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    if (px.requires_grad) {
      auto& g = px.grad_buffer().storage();
      const auto& w = pw.value.storage();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * w[i % c];
    }
    if (pw.requires_grad) {
      auto& g = pw.grad_buffer().storage();
      const auto& xv = px.value.storage();
      for (std::size_t i = 0; i < gy.size(); ++i) g[i % c] += gy[i] * xv[i];
    }
  });
}

Var exp(const Var& a) {
  return unary("exp", a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Var sqrt(const Var& a) {
  return unary("sqrt", a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Var square(const Var& a) {
  return unary("square", a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Var tanh(const Var& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

namespace {
inline double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Var sigmoid(const Var& a) {
  return unary("sigmoid", a, sigmoid_scalar,
               [](double, double y) { return y * (1.0 - y); });
}

Var relu(const Var& a) {
  return unary("relu", a, [](double x) { return x > 0 ? x : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var swish(const Var& a) {
  return unary("swish", a, [](double x) { return x * sigmoid_scalar(x); },
               [](double x, double) {
                 const double s = sigmoid_scalar(x);
                 return s * (1.0 + x * (1.0 - s));
               });
}

Var clamp_min(const Var& a, double lo) {
  return unary("clamp_min", a, [lo](double x) { return x < lo ? lo : x; },
               [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double x : a.value().storage()) s += x;
  return make_op("sum", Tensor::scalar(s), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    const double gy = self.grad[0];
    for (double& g : p.grad_buffer().storage()) g += gy;
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.numel());
  if (n == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var sum_dim(const Var& a, std::size_t dim, bool keepdim) {
  const AxisSplit s = split_axis(a.shape(), dim);
  Shape out_shape = a.shape();
  if (keepdim) {
    out_shape[dim] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(dim));
  }
  Tensor out(out_shape);
  const auto& x = a.value().storage();
  auto& y = out.storage();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < s.n; ++k) {
      const double* src = &x[(o * s.n + k) * s.inner];
      double* dst = &y[o * s.inner];
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  return make_op("sum_dim", std::move(out), {a}, [s](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer().storage();
    const auto& gy = self.grad.storage();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < s.n; ++k) {
        double* dst = &g[(o * s.n + k) * s.inner];
        const double* src = &gy[o * s.inner];
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
      }
  });
}

Var mean_dim(const Var& a, std::size_t dim, bool keepdim) {
  const std::size_t n = a.shape().at(dim);
  if (n == 0) throw DimensionError("mean over empty axis");
  return scale(sum_dim(a, dim, keepdim), 1.0 / static_cast<double>(n));
}

Var broadcast_dim(const Var& a, std::size_t dim, std::size_t n) {
  if (dim >= a.shape().size() || a.shape()[dim] != 1) {
    throw DimensionError("broadcast_dim: axis " + std::to_string(dim) +
                         " of " + shape_str(a.shape()) + " is not 1");
  }
  Shape out_shape = a.shape();
  out_shape[dim] = n;
  const AxisSplit s = split_axis(out_shape, dim);
  Tensor out(out_shape);
  const auto& x = a.value().storage();
  auto& y = out.storage();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < s.n; ++k) {
      const double* src = &x[o * s.inner];
      double* dst = &y[(o * s.n + k) * s.inner];
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] = src[i];
    }
  return make_op("broadcast_dim", std::move(out), {a}, [s](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer().storage();
    const auto& gy = self.grad.storage();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < s.n; ++k) {
        const double* src = &gy[(o * s.n + k) * s.inner];
        double* dst = &g[o * s.inner];
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
      }
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_op("reshape", std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer().storage();
    const auto& gy = self.grad.storage();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
  });
}

Var permute(const Var& a, const std::vector<std::size_t>& order) {
  const Shape& in = a.shape();
  const std::size_t r = in.size();
  if (order.size() != r) throw DimensionError("permute: rank mismatch");
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  Shape out_shape(r);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (order[i] >= r) throw DimensionError("permute: bad axis");
    out_shape[i] = in[order[i]];
    src_stride[i] = in_strides[order[i]];
  }
  // Gather index for every output element.
  const std::size_t n = a.numel();
  std::vector<std::size_t> index(n);
  std::vector<std::size_t> counter(r, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    index[i] = src;
    for (std::size_t d = r; d-- > 0;) {
      if (++counter[d] < out_shape[d]) {
        src += src_stride[d];
        break;
      }
      src -= src_stride[d] * (out_shape[d] - 1);
      counter[d] = 0;
    }
  }
  Tensor out(out_shape);
  const auto& x = a.value().storage();
  auto& y = out.storage();
  for (std::size_t i = 0; i < n; ++i) y[i] = x[index[i]];
  return make_op("permute", std::move(out), {a},
                 [index = std::move(index)](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   auto& g = p.grad_buffer().storage();
                   const auto& gy = self.grad.storage();
                   for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += gy[i];
                 });
}

Var concat(const std::vector<Var>& parts, std::size_t dim) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Shape out_shape = parts[0].shape();
  if (dim >= out_shape.size()) throw DimensionError("concat: axis out of range");
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != out_shape.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != dim && s[i] != out_shape[i]) {
        throw DimensionError("concat: shape mismatch " + shape_str(s) + " vs " +
                             shape_str(out_shape));
      }
    }
    widths.push_back(s[dim]);
    total += s[dim];
  }
  out_shape[dim] = total;
  const AxisSplit s = split_axis(out_shape, dim);
  Tensor out(out_shape);
  auto& y = out.storage();
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& x = parts[k].value().storage();
    const std::size_t w = widths[k] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(&x[o * w], w, &y[o * total * s.inner + offset]);
    }
    offset += w;
  }
  return make_op("concat", std::move(out), parts, [s, widths, total](Node& self) {
    const auto& gy = self.grad.storage();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      const std::size_t w = widths[k] * s.inner;
      Node& p = *self.parents[k];
      if (p.requires_grad) {
        auto& g = p.grad_buffer().storage();
        for (std::size_t o = 0; o < s.outer; ++o) {
          const double* src = &gy[o * total * s.inner + offset];
          double* dst = &g[o * w];
          for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
        }
      }
      offset += w;
    }
  });
}

Var slice(const Var& a, std::size_t dim, std::size_t start, std::size_t length) {
  const AxisSplit s = split_axis(a.shape(), dim);
  if (start + length > s.n) {
    throw DimensionError("slice [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") out of range for " +
                         shape_str(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[dim] = length;
  Tensor out(out_shape);
  const auto& x = a.value().storage();
  auto& y = out.storage();
  const std::size_t w = length * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(&x[(o * s.n + start) * s.inner], w, &y[o * w]);
  }
  return make_op("slice", std::move(out), {a}, [s, start, w](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer().storage();
    const auto& gy = self.grad.storage();
    for (std::size_t o = 0; o < s.outer; ++o) {
      double* dst = &g[(o * s.n + start) * s.inner];
      const double* src = &gy[o * w];
      for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
    }
  });
}

}  // namespace confsv
