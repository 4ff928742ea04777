// core/src/optim.cc

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

#include "confsv/optim.h"

#include <cmath>

#include "confsv/error.h"

namespace confsv {

AdamW::AdamW(std::vector<Var> params, AdamWOptions opts)
    : params_(std::move(params)), opts_(opts), m_(params_.size()), v_(params_.size()),
      t_(params_.size(), 0) {
  if (opts.lr < 0 || opts.weight_decay < 0) throw ConfigError("adamw: negative lr or decay");
}

void AdamW::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i];
    if (!p.requires_grad() || !p.has_grad()) continue;
    Tensor& w = p.mutable_value();
    const Tensor& g = p.grad();
    if (m_[i].empty()) {
      m_[i] = Tensor(w.shape());
      v_[i] = Tensor(w.shape());
    }
    const std::size_t t = ++t_[i];
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t));
    for (std::size_t j = 0; j < w.numel(); ++j) {
      const double gj = g[j];
      m_[i][j] = opts_.beta1 * m_[i][j] + (1.0 - opts_.beta1) * gj;
      v_[i][j] = opts_.beta2 * v_[i][j] + (1.0 - opts_.beta2) * gj * gj;
      w[j] -= lr * opts_.weight_decay * w[j];
      w[j] -= lr * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + opts_.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (Var& p : params_) p.zero_grad();
}

CosineWarmup::CosineWarmup(double base_lr, std::size_t warmup_steps, std::size_t total_steps)
    : base_(base_lr), warmup_(warmup_steps), total_(total_steps) {}

double CosineWarmup::lr(std::size_t step) const {
  if (step < warmup_) {
    return base_ * static_cast<double>(step + 1) / static_cast<double>(warmup_);
  }
  if (total_ <= warmup_) return base_;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup_) / static_cast<double>(total_ - warmup_));
  return 0.5 * base_ * (1.0 + std::cos(M_PI * progress));
}

double clip_grad_norm(const std::vector<Var>& params, double max_norm) {
  double ss = 0.0;
  for (const Var& p : params)
    if (p.has_grad())
      for (double g : p.grad().storage()) ss += g * g;
  const double norm = std::sqrt(ss);
  if (norm > max_norm && norm > 0.0) {
    const double k = max_norm / norm;
    for (const Var& p : params)
      if (p.has_grad())
        for (double& g : p.node()->grad.storage()) g *= k;
  }
  return norm;
}

}  // namespace confsv
