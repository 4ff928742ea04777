// core/include/confsv/losses.h

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

#ifndef CONFSV_LOSSES_H_
#define CONFSV_LOSSES_H_

#include <string>
#include <vector>

#include "confsv/nn.h"

namespace confsv {

// Margin-adjusted, scaled cosine logits [B, S]. For the target class the
// cosine c is clamped to [-1+1e-7, 1-1e-7] and replaced by
// c*cos(m) - sqrt(1-c^2)*sin(m); every logit is then multiplied by s.
Var aam_logits(const Var& cosines, const std::vector<std::size_t>& labels, double s, double m);

// Mean cross-entropy of logits [B, C] against class labels.
Var cross_entropy(const Var& logits, const std::vector<std::size_t>& labels);

// Additive angular margin softmax with a learned class matrix [S, dim].
class AamSoftmax : public Module {
 public:
  AamSoftmax(std::size_t num_classes, std::size_t dim);
  // Cosines between normalized embeddings [B, dim] and normalized class rows.
  Var cosines(const Var& embeddings) const;
  Var loss(const Var& embeddings, const std::vector<std::size_t>& labels, double s,
           double m) const;
  std::size_t num_classes() const { return classes_; }

 private:
  std::size_t classes_;
  Param* weight_;
};

// CTC negative log-likelihood for one sequence. logits [T, V+1] with the
// blank at index 0; target tokens in 1..V. Throws DataError when the target
// cannot be aligned in T frames, IndexError for out-of-range tokens.
Var ctc_loss(const Var& logits, const std::vector<int>& target);
// Mean over the batch of ctc_loss on logits [B, T, V+1].
Var ctc_loss_batch(const Var& logits, const std::vector<std::vector<int>>& targets);
// Frames needed to emit target: its length plus one per adjacent repeat.
std::size_t ctc_min_frames(const std::vector<int>& target);
// Best-path decoding: argmax per frame, merge repeats, drop blanks.
std::vector<int> ctc_greedy_decode(const Tensor& logits);

// KL(teacher || student) between softmax distributions over the last axis,
// averaged over frames. The teacher is a constant.
Var distill_kl_loss(const Var& student_logits, const Tensor& teacher_logits);

// l_spk + alpha * l_distill.
Var combined_loss(const Var& l_spk, const Var& l_distill, double alpha);

// Conv1d(d, d, k=3, s=2, p=1) applied to a student frame sequence so its
// frame count matches a teacher running at half its rate.
class RateMatchConv : public Module {
 public:
  explicit RateMatchConv(std::size_t dim);
  Var forward(const Var& frames) const;

 private:
  Conv1d conv_;
};

}  // namespace confsv

#endif  // CONFSV_LOSSES_H_
