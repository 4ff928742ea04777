// core/src/heads.cc

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

#include "confsv/heads.h"

#include "confsv/error.h"

namespace confsv {

MfaConcat::MfaConcat(std::size_t total_dim) : dim_(total_dim), norm_(total_dim) {
  add_child("norm", &norm_);
}

Var MfaConcat::forward(const std::vector<Var>& maps) const {
  if (maps.empty()) throw DimensionError("mfa: no feature maps");
  const Shape& s0 = maps[0].shape();
  std::size_t total = 0;
  for (const Var& m : maps) {
    const Shape& s = m.shape();
    if (s.size() != 3 || s[0] != s0[0] || s[1] != s0[1]) {
      throw DimensionError("mfa: map " + shape_str(s) + " does not match " + shape_str(s0));
    }
    total += s[2];
  }
  if (total != dim_) {
    throw DimensionError("mfa: concatenated width " + std::to_string(total) + " != " +
                         std::to_string(dim_));
  }
  return norm_.forward(maps.size() == 1 ? maps[0] : concat(maps, 2));
}

AttentiveStatsPool::AttentiveStatsPool(std::size_t dim, std::size_t bottleneck,
                                       double bn_momentum)
    : dim_(dim), in_(3 * dim, bottleneck), bn_(bottleneck, bn_momentum), out_(bottleneck, dim) {
  add_child("attention.0", &in_);
  add_child("attention.2", &bn_);
  add_child("attention.4", &out_);
}

namespace {

// Mean and std over time with weights w [B, T, D] (rows summing to 1 over T).
std::pair<Var, Var> weighted_moments(const Var& h, const Var& w) {
  const Var mu = sum_dim(mul(w, h), 1);                      // [B, D]
  const Var m2 = sum_dim(mul(w, square(h)), 1);              // [B, D]
  const Var var = sub(m2, square(mu));
  return {mu, sqrt(clamp_min(var, AttentiveStatsPool::kVarFloor))};
}

}  // namespace

Var AttentiveStatsPool::forward(const Var& h, const ForwardCtx& ctx, Tensor* weights) {
  if (h.shape().size() != 3 || h.dim(2) != dim_) {
    throw DimensionError("pooling: expected [B, T, " + std::to_string(dim_) + "], got " +
                         shape_str(h.shape()));
  }
  const std::size_t B = h.dim(0), T = h.dim(1);
  if (T == 0) throw DimensionError("pooling: zero frames");
  const Var uniform = constant(Tensor({B, T, dim_}, 1.0 / static_cast<double>(T)));
  auto [g_mu, g_sd] = weighted_moments(h, uniform);
  auto expand = [&](const Var& v) { return broadcast_dim(reshape(v, {B, 1, dim_}), 1, T); };
  const Var ctx_in = concat({h, expand(g_mu), expand(g_sd)}, 2);  // [B, T, 3D]
  Var a = tanh(bn_.forward(relu(in_.forward(ctx_in)), ctx));
  a = out_.forward(a);                                              // [B, T, D]
  const Var w = permute(softmax(permute(a, {0, 2, 1})), {0, 2, 1});  // softmax over T
  if (weights) *weights = w.value();
  auto [mu, sd] = weighted_moments(h, w);
  return concat({mu, sd}, 1);
}

EmbeddingHead::EmbeddingHead(std::size_t pooled_dim, std::size_t embed_dim, double bn_momentum)
    : in_dim_(pooled_dim), bn_(pooled_dim, bn_momentum), fc_(pooled_dim, embed_dim) {
  add_child("bn", &bn_);
  add_child("fc", &fc_);
}

Var EmbeddingHead::forward(const Var& pooled, const ForwardCtx& ctx) {
  if (pooled.shape().size() != 2 || pooled.dim(1) != in_dim_) {
    throw DimensionError("embedding head: expected [B, " + std::to_string(in_dim_) + "], got " +
                         shape_str(pooled.shape()));
  }
  return fc_.forward(bn_.forward(pooled, ctx));
}

SpeakerHead::SpeakerHead(std::size_t mfa_dim, double bn_momentum)
    : mfa_(mfa_dim), pool_(mfa_dim, kPoolBottleneck, bn_momentum),
      head_(2 * mfa_dim, kEmbeddingDim, bn_momentum) {
  add_child("mfa", &mfa_);
  add_child("pool", &pool_);
  add_child("head", &head_);
}

Var SpeakerHead::forward(const std::vector<Var>& maps, const ForwardCtx& ctx) {
  return head_.forward(pool_.forward(mfa_.forward(maps), ctx), ctx);
}

}  // namespace confsv
