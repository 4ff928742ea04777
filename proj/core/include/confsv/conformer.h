// core/include/confsv/conformer.h

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

#ifndef CONFSV_CONFORMER_H_
#define CONFSV_CONFORMER_H_

#include <memory>
#include <string>
#include <vector>

#include "confsv/nn.h"

namespace confsv {

// Hyperparameters of one Conformer block.
struct BlockConfig {
  std::size_t dim = 176;
  std::size_t heads = 4;
  std::size_t hidden = 704;
  std::size_t conv_kernel = 31;
  double dropout = 0.1;
  double bn_momentum = 0.1;

  void validate() const;
};

struct EncoderConfig {
  std::size_t layers = 16;
  std::size_t dim = 176;
  std::size_t heads = 4;
  std::size_t hidden = 704;
  std::size_t subsample = 4;  // 4 for rate 1/4, 2 for rate 1/2
  std::size_t conv_kernel = 31;
  double dropout = 0.1;
  double bn_momentum = 0.1;
  std::size_t n_mels = 80;

  void validate() const;
  BlockConfig block() const;
  // Feature-axis size after subsampling.
  std::size_t subsampled_mels() const;
  // Frames after subsampling for an input of n frames.
  std::size_t subsampled_frames(std::size_t n) const;

  static EncoderConfig small();
  static EncoderConfig medium();
  static EncoderConfig large();
  static EncoderConfig half_small();   // rate 1/2, 8 layers
  static EncoderConfig half_medium();  // rate 1/2, 9 layers
  static EncoderConfig half_large();   // rate 1/2, 9 layers
  static EncoderConfig toy();          // 2 blocks, d=32, kernel 15
  static EncoderConfig toy_half();     // toy at rate 1/2
  // small|medium|large|half_small|half_medium|half_large|toy|toy_half
  static EncoderConfig named(const std::string& name);
};

// Sinusoidal table for relative distances T-1 down to -(T-1): [2T-1, d].
Tensor relative_position_table(std::size_t frames, std::size_t dim);

// Stride-2 conv stages (one per halving) with ReLU, then Linear(d*F', d).
// Input [B, T, n_mels], output [B, T', d].
class Subsampling : public Module {
 public:
  explicit Subsampling(const EncoderConfig& cfg);
  Var forward(const Var& features) const;

 private:
  std::size_t n_mels_;
  std::vector<std::unique_ptr<Conv2d>> convs_;
  std::unique_ptr<Linear> proj_;
};

// LN -> Linear(d,h) -> Swish -> dropout -> Linear(h,d) -> dropout.
class FeedForward : public Module {
 public:
  explicit FeedForward(const BlockConfig& cfg);
  Var forward(const Var& x, const ForwardCtx& ctx) const;

 private:
  double dropout_;
  LayerNorm norm_;
  Linear up_, down_;
};

// LN then multi-head self-attention with relative positional scores
// (content term with bias u, position term with bias v).
class RelPosAttention : public Module {
 public:
  explicit RelPosAttention(const BlockConfig& cfg);
  // weights, when given, receives the attention probabilities [B, heads, T, T].
  // With use_position false the position term is dropped.
  Var forward(const Var& x, const ForwardCtx& ctx, Tensor* weights = nullptr,
              bool use_position = true) const;

  Linear& query() { return q_; }
  Linear& key() { return k_; }
  Linear& value() { return v_; }
  Linear& out() { return out_; }
  Linear& pos() { return pos_; }
  Param& bias_u() { return *bias_u_; }
  Param& bias_v() { return *bias_v_; }
  LayerNorm& norm() { return norm_; }

 private:
  std::size_t dim_, heads_;
  double dropout_;
  LayerNorm norm_;
  Linear q_, k_, v_, out_, pos_;
  Param* bias_u_;
  Param* bias_v_;
};

// LN -> Linear(d,2d) -> GLU -> depthwise conv -> BN -> Swish -> Linear(d,d) -> dropout.
class ConvModule : public Module {
 public:
  explicit ConvModule(const BlockConfig& cfg);
  Var forward(const Var& x, const ForwardCtx& ctx);
  BatchNorm& batch_norm() { return bn_; }
  Linear& pointwise_in() { return pw1_; }
  Linear& pointwise_out() { return pw2_; }
  DepthwiseConv1d& depthwise() { return dw_; }
  LayerNorm& norm() { return norm_; }

 private:
  double dropout_;
  LayerNorm norm_;
  Linear pw1_;
  DepthwiseConv1d dw_;
  BatchNorm bn_;
  Linear pw2_;
};

// x + FFN/2, + MHSA, + Conv, + FFN/2, then LN.
class ConformerBlock : public Module {
 public:
  explicit ConformerBlock(const BlockConfig& cfg);
  Var forward(const Var& x, const ForwardCtx& ctx);

  FeedForward& ffn1() { return ffn1_; }
  RelPosAttention& attention() { return mhsa_; }
  ConvModule& conv() { return conv_; }
  FeedForward& ffn2() { return ffn2_; }

 private:
  FeedForward ffn1_;
  RelPosAttention mhsa_;
  ConvModule conv_;
  FeedForward ffn2_;
  LayerNorm norm_out_;
};

// Subsampling followed by L blocks; forward returns every block output.
class ConformerEncoder : public Module {
 public:
  explicit ConformerEncoder(const EncoderConfig& cfg);
  // features [B, T, n_mels] -> maps of [B, T', d] for the first
  // min(max_layers, L) blocks.
  std::vector<Var> forward(const Var& features, const ForwardCtx& ctx,
                           std::size_t max_layers = static_cast<std::size_t>(-1));
  const EncoderConfig& config() const { return cfg_; }
  std::size_t num_layers() const { return blocks_.size(); }
  Subsampling& subsampling() { return *subsample_; }
  ConformerBlock& block(std::size_t i) { return *blocks_.at(i); }

 private:
  EncoderConfig cfg_;
  std::unique_ptr<Subsampling> subsample_;
  std::vector<std::unique_ptr<ConformerBlock>> blocks_;
};

// Copies the subsampling stack and the first n blocks (parameters and
// running statistics) into a new encoder.
std::unique_ptr<ConformerEncoder> truncate_encoder(ConformerEncoder& encoder, std::size_t n);

// Copies values of every parameter and buffer with matching name and shape.
// Returns the number of tensors copied.
std::size_t copy_state(Module& from, Module& to);

}  // namespace confsv

#endif  // CONFSV_CONFORMER_H_
