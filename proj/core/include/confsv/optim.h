// core/include/confsv/optim.h

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

#ifndef CONFSV_OPTIM_H_
#define CONFSV_OPTIM_H_

#include <vector>

#include "confsv/autodiff.h"

namespace confsv {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-7;
};

// Adam with decoupled weight decay. Parameters that do not require a
// gradient, or received none, are left untouched (including decay).
class AdamW {
 public:
  AdamW(std::vector<Var> params, AdamWOptions opts = {});
  void step(double lr);
  void step() { step(opts_.lr); }
  void zero_grad();
  const AdamWOptions& options() const { return opts_; }

 private:
  std::vector<Var> params_;
  AdamWOptions opts_;
  std::vector<Tensor> m_, v_;
  std::vector<std::size_t> t_;
};

// Linear warmup over warmup_steps, then cosine decay to zero at total_steps.
class CosineWarmup {
 public:
  CosineWarmup(double base_lr, std::size_t warmup_steps, std::size_t total_steps);
  double lr(std::size_t step) const;

 private:
  double base_;
  std::size_t warmup_, total_;
};

// Global L2 norm over gradients; scales them down to max_norm when above.
double clip_grad_norm(const std::vector<Var>& params, double max_norm);

}  // namespace confsv

#endif  // CONFSV_OPTIM_H_
