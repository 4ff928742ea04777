// tests/support/oracles.h

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

#ifndef CONFSV_TESTS_ORACLES_H_
#define CONFSV_TESTS_ORACLES_H_

// Straightforward reference implementations used as independent oracles.

#include <vector>

#include "confsv/audio.h"
#include "confsv/conformer.h"
#include "confsv/tensor.h"

namespace confsv::testing {

Tensor naive_matmul(const Tensor& a, const Tensor& b);
// NCHW, weight [Co, Ci, K, K].
Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad);
// x [B, T, Ci], weight [Co, Ci, K].
Tensor naive_conv1d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad);
// x [B, T, C], weight [C, K].
Tensor naive_depthwise(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t pad);
std::vector<double> naive_convolve(const std::vector<double>& a, const std::vector<double>& b);

// -log of the summed probability of every length-T path over V+1 symbols
// that collapses to target, by exhaustive enumeration.
double ctc_brute_force(const Tensor& logits, const std::vector<int>& target);

// Rates at threshold t: FAR = #{nontarget >= t}/N, FRR = #{target < t}/P.
struct RatePoint {
  double threshold, far, frr;
};
std::vector<RatePoint> brute_force_sweep(const std::vector<double>& scores, const std::vector<bool>& labels);
double brute_force_eer(const std::vector<double>& scores, const std::vector<bool>& labels);
double brute_force_min_dcf(const std::vector<double>& scores, const std::vector<bool>& labels,
                           double p_target = 0.01);

// Slaney-scale filterbank and log-mel features with a direct DFT.
Tensor direct_log_mel(const std::vector<double>& wave, const MelOptions& opts = {});

// Relative-position attention by explicit loops over (b, h, i, j), from
// the module's parameters. Inference mode.
Tensor naive_rel_pos_attention(RelPosAttention& m, const Tensor& x, std::size_t heads);

// Multinomial logistic regression on standardized features, fitted by full
// batch gradient descent with a hand-written gradient; returns training
// accuracy.
double logistic_regression_accuracy(const std::vector<std::vector<double>>& features,
                                    const std::vector<std::size_t>& labels, std::size_t iterations = 3000,
                                    double learning_rate = 0.5);

}  // namespace confsv::testing

#endif  // CONFSV_TESTS_ORACLES_H_
