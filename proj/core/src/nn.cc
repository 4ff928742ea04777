// core/src/nn.cc

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

#include "confsv/nn.h"

#include <cmath>

#include "confsv/error.h"

namespace confsv {

namespace {

std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

}  // namespace

Param& Module::add_param(const std::string& name, Shape shape, Init init, std::size_t fan_in) {
  Param p;
  p.var = Var(Tensor(std::move(shape)), true);
  p.init = init;
  p.fan_in = fan_in == 0 ? 1 : fan_in;
  if (init == Init::kOnes) p.var.mutable_value().fill(1.0);
  params_.emplace_back(name, std::move(p));
  return params_.back().second;
}

void Module::add_buffer(const std::string& name, Tensor* buffer) {
  buffers_.emplace_back(name, buffer);
}

void Module::add_child(const std::string& name, Module* child) {
  children_.emplace_back(name, child);
}

std::vector<std::pair<std::string, Param*>> Module::named_params(const std::string& prefix) {
  std::vector<std::pair<std::string, Param*>> out;
  for (auto& [name, p] : params_) out.emplace_back(join(prefix, name), &p);
  for (auto& [name, child] : children_) {
    auto sub = child->named_params(join(prefix, name));
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Module::named_buffers(const std::string& prefix) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& [name, b] : buffers_) out.emplace_back(join(prefix, name), b);
  for (auto& [name, child] : children_) {
    auto sub = child->named_buffers(join(prefix, name));
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

std::vector<Var> Module::parameters() {
  std::vector<Var> out;
  for (auto& [name, p] : named_params()) out.push_back(p->var);
  return out;
}

std::size_t Module::num_params() {
  std::size_t n = 0;
  for (auto& [name, p] : named_params()) n += p->var.numel();
  return n;
}

void Module::initialize(std::uint64_t seed, const std::string& prefix) {
  for (auto& [name, p] : named_params(prefix)) {
    Tensor& t = p->var.mutable_value();
    switch (p->init) {
      case Init::kOnes:
        t.fill(1.0);
        break;
      case Init::kZeros:
        t.fill(0.0);
        break;
      case Init::kFanInUniform: {
        Rng rng(derive_seed(seed, name));
        const double bound = 1.0 / std::sqrt(static_cast<double>(p->fan_in));
        for (double& v : t.storage()) v = rng.uniform(-bound, bound);
        break;
      }
    }
  }
}

void Module::set_trainable(bool on) {
  for (auto& [name, p] : named_params()) p->var.set_requires_grad(on);
}

void Module::zero_grad() {
  for (auto& [name, p] : named_params()) p->var.zero_grad();
}

Linear::Linear(std::size_t in, std::size_t out, bool bias) : in_(in), out_(out) {
  weight_ = &add_param("weight", {out, in}, Init::kFanInUniform, in);
  if (bias) bias_ = &add_param("bias", {out}, Init::kFanInUniform, in);
}

Var Linear::forward(const Var& x) const {
  return linear(x, weight_->var, bias_ ? &bias_->var : nullptr);
}

LayerNorm::LayerNorm(std::size_t dim, double eps) : eps_(eps) {
  gamma_ = &add_param("weight", {dim}, Init::kOnes);
  beta_ = &add_param("bias", {dim}, Init::kZeros);
}

Var LayerNorm::forward(const Var& x) const {
  return layer_norm(x, gamma_->var, beta_->var, eps_);
}

BatchNorm::BatchNorm(std::size_t channels, double momentum, double eps)
    : momentum_(momentum), eps_(eps) {
  gamma_ = &add_param("weight", {channels}, Init::kOnes);
  beta_ = &add_param("bias", {channels}, Init::kZeros);
  stats_.mean = Tensor({channels}, 0.0);
  stats_.var = Tensor({channels}, 1.0);
  add_buffer("running_mean", &stats_.mean);
  add_buffer("running_var", &stats_.var);
}

Var BatchNorm::forward(const Var& x, const ForwardCtx& ctx) {
  return batch_norm(x, gamma_->var, beta_->var, stats_, ctx.training, momentum_, eps_);
}

Conv2d::Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
               std::size_t padding)
    : stride_(stride), padding_(padding) {
  const std::size_t fan_in = in_ch * kernel * kernel;
  weight_ = &add_param("weight", {out_ch, in_ch, kernel, kernel}, Init::kFanInUniform, fan_in);
  bias_ = &add_param("bias", {out_ch}, Init::kFanInUniform, fan_in);
}

Var Conv2d::forward(const Var& x) const {
  return conv2d(x, weight_->var, &bias_->var, stride_, padding_);
}

Conv1d::Conv1d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
               std::size_t padding)
    : stride_(stride), padding_(padding) {
  const std::size_t fan_in = in_ch * kernel;
  weight_ = &add_param("weight", {out_ch, in_ch, kernel}, Init::kFanInUniform, fan_in);
  bias_ = &add_param("bias", {out_ch}, Init::kFanInUniform, fan_in);
}

Var Conv1d::forward(const Var& x) const {
  return conv1d(x, weight_->var, &bias_->var, stride_, padding_);
}

DepthwiseConv1d::DepthwiseConv1d(std::size_t channels, std::size_t kernel, std::size_t padding,
                                 bool bias)
    : padding_(padding) {
  weight_ = &add_param("weight", {channels, kernel}, Init::kFanInUniform, kernel);
  if (bias) bias_ = &add_param("bias", {channels}, Init::kFanInUniform, kernel);
}

Var DepthwiseConv1d::forward(const Var& x) const {
  return depthwise_conv1d(x, weight_->var, bias_ ? &bias_->var : nullptr, padding_);
}

}  // namespace confsv
