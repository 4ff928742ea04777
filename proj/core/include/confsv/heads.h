// core/include/confsv/heads.h

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

#ifndef CONFSV_HEADS_H_
#define CONFSV_HEADS_H_

#include <vector>

#include "confsv/nn.h"

namespace confsv {

inline constexpr std::size_t kEmbeddingDim = 256;
inline constexpr std::size_t kPoolBottleneck = 128;

// Channel concatenation of frame-level maps [B, T, d_i] in the given order,
// then layer norm over the concatenated axis.
class MfaConcat : public Module {
 public:
  explicit MfaConcat(std::size_t total_dim);
  Var forward(const std::vector<Var>& maps) const;
  std::size_t dim() const { return dim_; }

 private:
  std::size_t dim_;
  LayerNorm norm_;
};

// Attentive statistics pooling. The scorer sees each frame together with the
// utterance mean and std: Linear(3D,128) -> ReLU -> BN -> tanh -> Linear(128,D),
// softmax over time per channel. Output [B, 2D] = weighted mean || weighted std.
class AttentiveStatsPool : public Module {
 public:
  explicit AttentiveStatsPool(std::size_t dim, std::size_t bottleneck = kPoolBottleneck,
                              double bn_momentum = 0.1);
  // weights, when given, receives the attention [B, T, D].
  Var forward(const Var& h, const ForwardCtx& ctx, Tensor* weights = nullptr);
  Linear& scorer_in() { return in_; }
  Linear& scorer_out() { return out_; }
  BatchNorm& scorer_norm() { return bn_; }

  static constexpr double kVarFloor = 1e-10;

 private:
  std::size_t dim_;
  Linear in_;
  BatchNorm bn_;
  Linear out_;
};

// BN(2D) -> Linear(2D, 256).
class EmbeddingHead : public Module {
 public:
  explicit EmbeddingHead(std::size_t pooled_dim, std::size_t embed_dim = kEmbeddingDim,
                         double bn_momentum = 0.1);
  Var forward(const Var& pooled, const ForwardCtx& ctx);
  Linear& linear() { return fc_; }
  BatchNorm& norm() { return bn_; }

 private:
  std::size_t in_dim_;
  BatchNorm bn_;
  Linear fc_;
};

// MFA -> ASP -> embedding.
class SpeakerHead : public Module {
 public:
  explicit SpeakerHead(std::size_t mfa_dim, double bn_momentum = 0.1);
  Var forward(const std::vector<Var>& maps, const ForwardCtx& ctx);
  MfaConcat& mfa() { return mfa_; }
  AttentiveStatsPool& pool() { return pool_; }
  EmbeddingHead& embedding() { return head_; }

 private:
  MfaConcat mfa_;
  AttentiveStatsPool pool_;
  EmbeddingHead head_;
};

}  // namespace confsv

#endif  // CONFSV_HEADS_H_
