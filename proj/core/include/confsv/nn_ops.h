// core/include/confsv/nn_ops.h

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

#ifndef CONFSV_NN_OPS_H_
#define CONFSV_NN_OPS_H_

#include <optional>

#include "confsv/autodiff.h"
#include "confsv/random.h"

namespace confsv {

// Output length of a strided window: floor((n + 2*padding - kernel)/stride) + 1.
// Throws DimensionError when the window does not fit.
std::size_t conv_out_length(std::size_t n, std::size_t kernel,
                            std::size_t stride, std::size_t padding);

// [m,k] x [k,n] -> [m,n]
Var matmul(const Var& a, const Var& b);
// [N,m,k] x [N,k,n] -> [N,m,n]; with transpose_b, b is [N,n,k].
Var bmm(const Var& a, const Var& b, bool transpose_b = false);
// x[..., in] * weight[out, in]^T + bias[out]
Var linear(const Var& x, const Var& weight, const Var* bias = nullptr);

// Over the last axis, max-subtracted.
Var softmax(const Var& x);
Var log_softmax(const Var& x);

// Normalizes over the last axis, then applies gamma/beta.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

struct BatchNormStats {
  Tensor mean;
  Tensor var;
};
// Channels on the last axis; statistics over all other axes. In training
// mode uses batch statistics (biased variance) and updates running stats
// with `momentum` (unbiased variance, as is customary); in inference mode
// uses the running stats.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               BatchNormStats& running, bool training, double momentum = 0.1,
               double eps = 1e-5);

// Splits the last axis in half: first * sigmoid(second).
Var glu(const Var& x);

// Inverted dropout. Identity when !training or rate == 0.
Var dropout(const Var& x, double rate, Rng* rng, bool training);

// NCHW. weight [Cout, Cin, kh, kw].
Var conv2d(const Var& x, const Var& weight, const Var* bias, std::size_t stride,
           std::size_t padding);
// Channels-last sequence conv: x [B, T, Cin], weight [Cout, Cin, k].
Var conv1d(const Var& x, const Var& weight, const Var* bias, std::size_t stride,
           std::size_t padding);
// Per-channel conv along time: x [B, T, C], weight [C, k], stride 1.
Var depthwise_conv1d(const Var& x, const Var& weight, const Var* bias,
                     std::size_t padding);

// Relative-position score realignment. x [..., T, 2T-1] where column p holds
// relative distance (T-1-p); returns [..., T, T] with out[i][j] taken at
// distance i-j.
Var rel_shift(const Var& x);

// Rows of the last axis scaled to unit L2 norm (norm floored at eps).
Var l2_normalize(const Var& x, double eps = 1e-12);

}  // namespace confsv

#endif  // CONFSV_NN_OPS_H_
