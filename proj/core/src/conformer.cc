// core/src/conformer.cc

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

#include "confsv/conformer.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "confsv/error.h"

namespace confsv {

void BlockConfig::validate() const {
  if (dim == 0 || heads == 0 || hidden == 0) throw ConfigError("block: zero-sized dimension");
  if (dim % heads != 0) {
    throw ConfigError("heads (" + std::to_string(heads) + ") must divide dim (" +
                      std::to_string(dim) + ")");
  }
  if (conv_kernel % 2 == 0) throw ConfigError("conv_kernel must be odd");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (bn_momentum <= 0.0 || bn_momentum > 1.0) throw ConfigError("bn_momentum must lie in (0, 1]");
}

void EncoderConfig::validate() const {
  if (layers == 0) throw ConfigError("encoder needs at least one layer");
  if (subsample != 2 && subsample != 4) throw ConfigError("subsample must be 2 or 4");
  if (n_mels == 0) throw ConfigError("n_mels must be positive");
  block().validate();
}

BlockConfig EncoderConfig::block() const {
  BlockConfig b;
  b.dim = dim;
  b.heads = heads;
  b.hidden = hidden;
  b.conv_kernel = conv_kernel;
  b.dropout = dropout;
  b.bn_momentum = bn_momentum;
  return b;
}

std::size_t EncoderConfig::subsampled_mels() const {
  std::size_t f = n_mels;
  for (std::size_t r = subsample; r > 1; r /= 2) f = conv_out_length(f, 3, 2, 1);
  return f;
}

std::size_t EncoderConfig::subsampled_frames(std::size_t n) const {
  for (std::size_t r = subsample; r > 1; r /= 2) n = conv_out_length(n, 3, 2, 1);
  return n;
}

namespace {

EncoderConfig make(std::size_t layers, std::size_t dim, std::size_t heads, std::size_t hidden,
                   std::size_t subsample) {
  EncoderConfig c;
  c.layers = layers;
  c.dim = dim;
  c.heads = heads;
  c.hidden = hidden;
  c.subsample = subsample;
  return c;
}

}  // namespace

EncoderConfig EncoderConfig::small() { return make(16, 176, 4, 704, 4); }
EncoderConfig EncoderConfig::medium() { return make(18, 256, 4, 1024, 4); }
EncoderConfig EncoderConfig::large() { return make(18, 512, 8, 2048, 4); }
EncoderConfig EncoderConfig::half_small() { return make(8, 176, 4, 704, 2); }
EncoderConfig EncoderConfig::half_medium() { return make(9, 256, 4, 1024, 2); }
EncoderConfig EncoderConfig::half_large() { return make(9, 512, 8, 2048, 2); }

EncoderConfig EncoderConfig::toy() {
  EncoderConfig c = make(2, 32, 4, 128, 4);
  c.conv_kernel = 15;
  return c;
}

EncoderConfig EncoderConfig::toy_half() {
  EncoderConfig c = toy();
  c.subsample = 2;
  return c;
}

EncoderConfig EncoderConfig::named(const std::string& name) {
  static const std::map<std::string, EncoderConfig (*)()> table = {
      {"small", &EncoderConfig::small},           {"medium", &EncoderConfig::medium},
      {"large", &EncoderConfig::large},           {"half_small", &EncoderConfig::half_small},
      {"half_medium", &EncoderConfig::half_medium}, {"half_large", &EncoderConfig::half_large},
      {"toy", &EncoderConfig::toy},               {"toy_half", &EncoderConfig::toy_half},
  };
  auto it = table.find(name);
  if (it == table.end()) throw ConfigError("unknown encoder preset: " + name);
  return it->second();
}

Tensor relative_position_table(std::size_t frames, std::size_t dim) {
  const std::size_t P = 2 * frames - 1;
  Tensor pe({P, dim});
  for (std::size_t p = 0; p < P; ++p) {
    const double pos = static_cast<double>(frames) - 1.0 - static_cast<double>(p);
    for (std::size_t i = 0; i < dim; i += 2) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                   static_cast<double>(dim));
      pe.at(p, i) = std::sin(pos * freq);
      if (i + 1 < dim) pe.at(p, i + 1) = std::cos(pos * freq);
    }
  }
  return pe;
}

Subsampling::Subsampling(const EncoderConfig& cfg) : n_mels_(cfg.n_mels) {
  std::size_t in = 1;
  for (std::size_t r = cfg.subsample, i = 0; r > 1; r /= 2, ++i) {
    convs_.push_back(std::make_unique<Conv2d>(in, cfg.dim, 3, 2, 1));
    add_child("conv" + std::to_string(i), convs_.back().get());
    in = cfg.dim;
  }
  proj_ = std::make_unique<Linear>(cfg.dim * cfg.subsampled_mels(), cfg.dim);
  add_child("out", proj_.get());
}

Var Subsampling::forward(const Var& features) const {
  if (features.shape().size() != 3 || features.dim(2) != n_mels_) {
    throw DimensionError("subsampling: expected [B, T, " + std::to_string(n_mels_) + "], got " +
                         shape_str(features.shape()));
  }
  const std::size_t B = features.dim(0), T = features.dim(1);
  if (T == 0) throw DataError("subsampling: input too short (0 frames)");
  Var x = reshape(features, {B, 1, T, n_mels_});
  for (const auto& conv : convs_) x = relu(conv->forward(x));
  const std::size_t C = x.dim(1), To = x.dim(2), F = x.dim(3);
  x = reshape(permute(x, {0, 2, 1, 3}), {B, To, C * F});
  return proj_->forward(x);
}

FeedForward::FeedForward(const BlockConfig& cfg)
    : dropout_(cfg.dropout), norm_(cfg.dim), up_(cfg.dim, cfg.hidden), down_(cfg.hidden, cfg.dim) {
  add_child("norm", &norm_);
  add_child("linear1", &up_);
  add_child("linear2", &down_);
}

Var FeedForward::forward(const Var& x, const ForwardCtx& ctx) const {
  Var h = swish(up_.forward(norm_.forward(x)));
  h = dropout(h, dropout_, ctx.rng, ctx.training);
  return dropout(down_.forward(h), dropout_, ctx.rng, ctx.training);
}

RelPosAttention::RelPosAttention(const BlockConfig& cfg)
    : dim_(cfg.dim),
      heads_(cfg.heads),
      dropout_(cfg.dropout),
      norm_(cfg.dim),
      q_(cfg.dim, cfg.dim),
      k_(cfg.dim, cfg.dim),
      v_(cfg.dim, cfg.dim),
      out_(cfg.dim, cfg.dim),
      pos_(cfg.dim, cfg.dim, false) {
  cfg.validate();
  add_child("norm", &norm_);
  add_child("linear_q", &q_);
  add_child("linear_k", &k_);
  add_child("linear_v", &v_);
  add_child("linear_out", &out_);
  add_child("linear_pos", &pos_);
  bias_u_ = &add_param("pos_bias_u", {cfg.dim}, Init::kFanInUniform, cfg.dim / cfg.heads);
  bias_v_ = &add_param("pos_bias_v", {cfg.dim}, Init::kFanInUniform, cfg.dim / cfg.heads);
}

Var RelPosAttention::forward(const Var& x, const ForwardCtx& ctx, Tensor* weights,
                             bool use_position) const {
  if (x.shape().size() != 3 || x.dim(2) != dim_) {
    throw DimensionError("attention: expected [B, T, " + std::to_string(dim_) + "], got " +
                         shape_str(x.shape()));
  }
  const std::size_t B = x.dim(0), T = x.dim(1), H = heads_, dk = dim_ / heads_;
  if (T == 0) throw DimensionError("attention: zero frames");
  const Var xn = norm_.forward(x);
  auto split = [&](const Var& t, std::size_t len) {
    // [B, len, d] -> [B*H, len, dk]
    return reshape(permute(reshape(t, {B, len, H, dk}), {0, 2, 1, 3}), {B * H, len, dk});
  };
  const Var q = q_.forward(xn);
  const Var k = split(k_.forward(xn), T);
  const Var v = split(v_.forward(xn), T);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Var scores = bmm(split(add_bias(q, bias_u_->var), T), k, true);
  if (use_position) {
    const std::size_t P = 2 * T - 1;
    Var p = pos_.forward(constant(relative_position_table(T, dim_)));  // [P, d]
    p = permute(reshape(p, {1, P, H, dk}), {0, 2, 1, 3});               // [1, H, P, dk]
    p = reshape(broadcast_dim(p, 0, B), {B * H, P, dk});
    const Var bd = rel_shift(bmm(split(add_bias(q, bias_v_->var), T), p, true));
    scores = add(scores, bd);
  }
  Var attn = softmax(scale(scores, inv_scale));  // [B*H, T, T]
  if (weights) *weights = attn.value().reshaped({B, H, T, T});
  attn = dropout(attn, dropout_, ctx.rng, ctx.training);
  Var context = bmm(attn, v);  // [B*H, T, dk]
  context = reshape(permute(reshape(context, {B, H, T, dk}), {0, 2, 1, 3}), {B, T, dim_});
  return dropout(out_.forward(context), dropout_, ctx.rng, ctx.training);
}

ConvModule::ConvModule(const BlockConfig& cfg)
    : dropout_(cfg.dropout),
      norm_(cfg.dim),
      pw1_(cfg.dim, 2 * cfg.dim),
      dw_(cfg.dim, cfg.conv_kernel, (cfg.conv_kernel - 1) / 2),
      bn_(cfg.dim, cfg.bn_momentum),
      pw2_(cfg.dim, cfg.dim) {
  cfg.validate();
  add_child("norm", &norm_);
  add_child("pointwise_conv1", &pw1_);
  add_child("depthwise_conv", &dw_);
  add_child("batch_norm", &bn_);
  add_child("pointwise_conv2", &pw2_);
}

Var ConvModule::forward(const Var& x, const ForwardCtx& ctx) {
  if (x.shape().size() != 3 || x.dim(1) == 0) {
    throw DimensionError("conv module: expected [B, T>=1, d], got " + shape_str(x.shape()));
  }
  Var h = glu(pw1_.forward(norm_.forward(x)));
  h = swish(bn_.forward(dw_.forward(h), ctx));
  return dropout(pw2_.forward(h), dropout_, ctx.rng, ctx.training);
}

ConformerBlock::ConformerBlock(const BlockConfig& cfg)
    : ffn1_(cfg), mhsa_(cfg), conv_(cfg), ffn2_(cfg), norm_out_(cfg.dim) {
  add_child("feed_forward1", &ffn1_);
  add_child("self_attn", &mhsa_);
  add_child("conv", &conv_);
  add_child("feed_forward2", &ffn2_);
  add_child("norm_out", &norm_out_);
}

Var ConformerBlock::forward(const Var& x, const ForwardCtx& ctx) {
  Var h = add(x, scale(ffn1_.forward(x, ctx), 0.5));
  h = add(h, mhsa_.forward(h, ctx));
  h = add(h, conv_.forward(h, ctx));
  h = add(h, scale(ffn2_.forward(h, ctx), 0.5));
  return norm_out_.forward(h);
}

ConformerEncoder::ConformerEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  subsample_ = std::make_unique<Subsampling>(cfg);
  add_child("pre_encode", subsample_.get());
  const BlockConfig bc = cfg.block();
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    blocks_.push_back(std::make_unique<ConformerBlock>(bc));
    add_child("layers." + std::to_string(i), blocks_.back().get());
  }
}

std::vector<Var> ConformerEncoder::forward(const Var& features, const ForwardCtx& ctx,
                                           std::size_t max_layers) {
  const std::size_t n = std::min(max_layers, blocks_.size());
  std::vector<Var> out;
  out.reserve(n);
  Var h = subsample_->forward(features);
  for (std::size_t i = 0; i < n; ++i) {
    h = blocks_[i]->forward(h, ctx);
    out.push_back(h);
  }
  return out;
}

std::size_t copy_state(Module& from, Module& to) {
  std::map<std::string, Tensor*> src;
  for (auto& [name, p] : from.named_params()) src[name] = &p->var.mutable_value();
  for (auto& [name, b] : from.named_buffers()) src["#" + name] = b;
  std::size_t copied = 0;
  for (auto& [name, p] : to.named_params()) {
    auto it = src.find(name);
    if (it != src.end() && it->second->same_shape(p->var.value())) {
      p->var.mutable_value() = *it->second;
      ++copied;
    }
  }
  for (auto& [name, b] : to.named_buffers()) {
    auto it = src.find("#" + name);
    if (it != src.end() && it->second->same_shape(*b)) {
      *b = *it->second;
      ++copied;
    }
  }
  return copied;
}

std::unique_ptr<ConformerEncoder> truncate_encoder(ConformerEncoder& encoder, std::size_t n) {
  if (n == 0 || n > encoder.num_layers()) {
    throw ConfigError("truncate_encoder: n=" + std::to_string(n) + " outside 1.." +
                      std::to_string(encoder.num_layers()));
  }
  EncoderConfig cfg = encoder.config();
  cfg.layers = n;
  auto out = std::make_unique<ConformerEncoder>(cfg);
  copy_state(encoder, *out);
  return out;
}

}  // namespace confsv
