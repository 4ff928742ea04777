// core/include/confsv/nn.h

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

#ifndef CONFSV_NN_H_
#define CONFSV_NN_H_

#include <cstdint>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "confsv/autodiff.h"
#include "confsv/nn_ops.h"
#include "confsv/random.h"

namespace confsv {

enum class Init {
  kFanInUniform,  // U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  kOnes,
  kZeros,
};

struct Param {
  Var var;
  Init init = Init::kFanInUniform;
  std::size_t fan_in = 1;
};

// Per-call forward settings.
struct ForwardCtx {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout > 0
};

// Base for layers that own parameters. Parameters are registered with local
// names; full names are dotted paths from the root module. Modules register
// children by address, so they are neither copyable nor movable.
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  std::vector<std::pair<std::string, Param*>> named_params(const std::string& prefix = "");
  std::vector<std::pair<std::string, Tensor*>> named_buffers(const std::string& prefix = "");
  // Vars of all parameters, in registration order.
  std::vector<Var> parameters();
  std::size_t num_params();

  // Deterministic init; each parameter draws from a stream derived from
  // (seed, full name), so the result does not depend on construction order.
  void initialize(std::uint64_t seed, const std::string& prefix = "");
  void set_trainable(bool on);
  void zero_grad();

 protected:
  Param& add_param(const std::string& name, Shape shape, Init init, std::size_t fan_in = 1);
  void add_buffer(const std::string& name, Tensor* buffer);
  void add_child(const std::string& name, Module* child);

 private:
  std::deque<std::pair<std::string, Param>> params_;
  std::vector<std::pair<std::string, Tensor*>> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;
};

class Linear : public Module {
 public:
  Linear(std::size_t in, std::size_t out, bool bias = true);
  Var forward(const Var& x) const;
  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Param& weight() { return *weight_; }
  Param* bias() { return bias_; }

 private:
  std::size_t in_, out_;
  Param* weight_;
  Param* bias_ = nullptr;
};

class LayerNorm : public Module {
 public:
  explicit LayerNorm(std::size_t dim, double eps = 1e-5);
  Var forward(const Var& x) const;
  Param& gamma() { return *gamma_; }
  Param& beta() { return *beta_; }

 private:
  double eps_;
  Param* gamma_;
  Param* beta_;
};

class BatchNorm : public Module {
 public:
  explicit BatchNorm(std::size_t channels, double momentum = 0.1, double eps = 1e-5);
  Var forward(const Var& x, const ForwardCtx& ctx);
  BatchNormStats& stats() { return stats_; }
  Param& gamma() { return *gamma_; }
  Param& beta() { return *beta_; }

 private:
  double momentum_, eps_;
  Param* gamma_;
  Param* beta_;
  BatchNormStats stats_;
};

// NCHW 2-D convolution with square kernels.
class Conv2d : public Module {
 public:
  Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
         std::size_t padding);
  Var forward(const Var& x) const;

 private:
  std::size_t stride_, padding_;
  Param* weight_;
  Param* bias_;
};

// Channels-last 1-D convolution.
class Conv1d : public Module {
 public:
  Conv1d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
         std::size_t padding);
  Var forward(const Var& x) const;

 private:
  std::size_t stride_, padding_;
  Param* weight_;
  Param* bias_;
};

class DepthwiseConv1d : public Module {
 public:
  DepthwiseConv1d(std::size_t channels, std::size_t kernel, std::size_t padding,
                  bool bias = true);
  Var forward(const Var& x) const;
  Param& weight() { return *weight_; }

 private:
  std::size_t padding_;
  Param* weight_;
  Param* bias_ = nullptr;
};

}  // namespace confsv

#endif  // CONFSV_NN_H_
