// core/src/losses.cc

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

#include "confsv/losses.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "confsv/error.h"

namespace confsv {

namespace {

constexpr double kCosClamp = 1.0 - 1e-7;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

void check_labels(const std::vector<std::size_t>& labels, std::size_t rows,
                  std::size_t classes) {
  if (labels.size() != rows) {
    throw DimensionError("labels: " + std::to_string(labels.size()) + " for " +
                         std::to_string(rows) + " rows");
  }
  for (std::size_t y : labels) {
    if (y >= classes) {
      throw IndexError("label " + std::to_string(y) + " out of range for " +
                       std::to_string(classes) + " classes");
    }
  }
}

}  // namespace

Var aam_logits(const Var& cosines, const std::vector<std::size_t>& labels, double s, double m) {
  if (cosines.shape().size() != 2) throw DimensionError("aam: cosines must be [B, S]");
  const std::size_t B = cosines.dim(0), S = cosines.dim(1);
  check_labels(labels, B, S);
  if (m < 0.0 || m >= M_PI / 2) throw ConfigError("aam: margin must lie in [0, pi/2)");
  const double cm = std::cos(m), sm = std::sin(m);
  Tensor out = cosines.value();
  std::vector<double> dtarget(B);
  for (std::size_t b = 0; b < B; ++b) {
    const double c = out.at(b, labels[b]);
    const double cc = std::clamp(c, -kCosClamp, kCosClamp);
    const double sn = std::sqrt(1.0 - cc * cc);
    out.at(b, labels[b]) = cc * cm - sn * sm;
    dtarget[b] = (c == cc) ? cm + sm * cc / sn : 0.0;
  }
  for (double& v : out.storage()) v *= s;
  return make_op("aam_logits", std::move(out), {cosines},
                 [B, S, s, labels, dtarget = std::move(dtarget)](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   Tensor& g = p.grad_buffer();
                   for (std::size_t b = 0; b < B; ++b)
                     for (std::size_t j = 0; j < S; ++j) {
                       const double gy = self.grad.at(b, j) * s;
                       g.at(b, j) += j == labels[b] ? gy * dtarget[b] : gy;
                     }
                 });
}

Var cross_entropy(const Var& logits, const std::vector<std::size_t>& labels) {
  if (logits.shape().size() != 2) throw DimensionError("cross_entropy: logits must be [B, C]");
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  check_labels(labels, B, C);
  if (B == 0) throw DimensionError("cross_entropy: empty batch");
  const Var lp = log_softmax(logits);
  Tensor pick({B, C});
  for (std::size_t b = 0; b < B; ++b) pick.at(b, labels[b]) = -1.0 / static_cast<double>(B);
  return sum(mul(lp, constant(std::move(pick))));
}

AamSoftmax::AamSoftmax(std::size_t num_classes, std::size_t dim) : classes_(num_classes) {
  if (num_classes < 2) throw ConfigError("aam: need at least two classes");
  weight_ = &add_param("weight", {num_classes, dim}, Init::kFanInUniform, dim);
}

Var AamSoftmax::cosines(const Var& embeddings) const {
  return linear(l2_normalize(embeddings), l2_normalize(weight_->var));
}

Var AamSoftmax::loss(const Var& embeddings, const std::vector<std::size_t>& labels, double s,
                     double m) const {
  return cross_entropy(aam_logits(cosines(embeddings), labels, s, m), labels);
}

std::size_t ctc_min_frames(const std::vector<int>& target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

Var ctc_loss(const Var& logits, const std::vector<int>& target) {
  if (logits.shape().size() != 2 || logits.dim(1) < 2) {
    throw DimensionError("ctc: logits must be [T, V+1] with V >= 1, got " +
                         shape_str(logits.shape()));
  }
  const std::size_t T = logits.dim(0), C = logits.dim(1);
  for (int tok : target) {
    if (tok < 1 || static_cast<std::size_t>(tok) >= C) {
      throw IndexError("ctc: token " + std::to_string(tok) + " outside 1.." +
                       std::to_string(C - 1));
    }
  }
  if (T == 0 || T < ctc_min_frames(target)) {
    throw DataError("ctc: infeasible target of length " + std::to_string(target.size()) +
                    " in " + std::to_string(T) + " frames");
  }
  // Log-probabilities per frame.
  Tensor lp({T, C});
  for (std::size_t t = 0; t < T; ++t) {
    double mx = kNegInf;
    for (std::size_t k = 0; k < C; ++k) mx = std::max(mx, logits.value().at(t, k));
    double z = 0.0;
    for (std::size_t k = 0; k < C; ++k) z += std::exp(logits.value().at(t, k) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t k = 0; k < C; ++k) lp.at(t, k) = logits.value().at(t, k) - lse;
  }
  // Extended label sequence with blanks: b l1 b l2 ... b.
  const std::size_t S = 2 * target.size() + 1;
  std::vector<std::size_t> ext(S, 0);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = static_cast<std::size_t>(target[i]);
  auto can_skip = [&](std::size_t s) { return s >= 2 && ext[s] != 0 && ext[s] != ext[s - 2]; };

  std::vector<double> alpha(T * S, kNegInf), beta(T * S, kNegInf);
  alpha[0] = lp.at(0, ext[0]);
  if (S > 1) alpha[1] = lp.at(0, ext[1]);
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t s = 0; s < S; ++s) {
      double a = alpha[(t - 1) * S + s];
      if (s >= 1) a = log_add(a, alpha[(t - 1) * S + s - 1]);
      if (can_skip(s)) a = log_add(a, alpha[(t - 1) * S + s - 2]);
      alpha[t * S + s] = a == kNegInf ? kNegInf : a + lp.at(t, ext[s]);
    }
  beta[(T - 1) * S + S - 1] = lp.at(T - 1, ext[S - 1]);
  if (S > 1) beta[(T - 1) * S + S - 2] = lp.at(T - 1, ext[S - 2]);
  for (std::size_t t = T - 1; t-- > 0;)
    for (std::size_t s = 0; s < S; ++s) {
      double b = beta[(t + 1) * S + s];
      if (s + 1 < S) b = log_add(b, beta[(t + 1) * S + s + 1]);
      if (s + 2 < S && can_skip(s + 2)) b = log_add(b, beta[(t + 1) * S + s + 2]);
      beta[t * S + s] = b == kNegInf ? kNegInf : b + lp.at(t, ext[s]);
    }
  double log_p = alpha[(T - 1) * S + S - 1];
  if (S > 1) log_p = log_add(log_p, alpha[(T - 1) * S + S - 2]);
  if (!std::isfinite(log_p)) throw NumericError("ctc: non-finite likelihood");

  // d(-log p)/d logit[t,k] = softmax[t,k] - sum_{s: ext[s]=k} exp(alpha+beta-lp-log p).
  Tensor grad({T, C});
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> occ(C, kNegInf);
    for (std::size_t s = 0; s < S; ++s) {
      const double a = alpha[t * S + s], b = beta[t * S + s];
      if (a == kNegInf || b == kNegInf) continue;
      occ[ext[s]] = log_add(occ[ext[s]], a + b - lp.at(t, ext[s]));
    }
    for (std::size_t k = 0; k < C; ++k) {
      const double post = occ[k] == kNegInf ? 0.0 : std::exp(occ[k] - log_p);
      grad.at(t, k) = std::exp(lp.at(t, k)) - post;
    }
  }
  return make_op("ctc_loss", Tensor::scalar(-log_p), {logits},
                 [grad = std::move(grad)](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   const double g = self.grad.item();
                   auto& gx = p.grad_buffer().storage();
                   for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * grad[i];
                 });
}

Var ctc_loss_batch(const Var& logits, const std::vector<std::vector<int>>& targets) {
  if (logits.shape().size() != 3 || logits.dim(0) != targets.size()) {
    throw DimensionError("ctc: batch logits " + shape_str(logits.shape()) + " for " +
                         std::to_string(targets.size()) + " targets");
  }
  const std::size_t B = logits.dim(0), T = logits.dim(1), C = logits.dim(2);
  Var total;
  for (std::size_t b = 0; b < B; ++b) {
    const Var l = ctc_loss(reshape(slice(logits, 0, b, 1), {T, C}), targets[b]);
    total = total.defined() ? add(total, l) : l;
  }
  return scale(total, 1.0 / static_cast<double>(B));
}

std::vector<int> ctc_greedy_decode(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("ctc decode: logits must be [T, V+1]");
  std::vector<int> out;
  int prev = -1;
  for (std::size_t t = 0; t < logits.dim(0); ++t) {
    int best = 0;
    for (std::size_t k = 1; k < logits.dim(1); ++k)
      if (logits.at(t, k) > logits.at(t, static_cast<std::size_t>(best))) best = static_cast<int>(k);
    if (best != 0 && best != prev) out.push_back(best);
    prev = best;
  }
  return out;
}

Var distill_kl_loss(const Var& student_logits, const Tensor& teacher_logits) {
  if (student_logits.shape() != teacher_logits.shape()) {
    throw DimensionError("kl: student " + shape_str(student_logits.shape()) + " vs teacher " +
                         shape_str(teacher_logits.shape()));
  }
  if (student_logits.shape().empty() || student_logits.shape().back() == 0) {
    throw DimensionError("kl: empty class axis");
  }
  const std::size_t C = student_logits.shape().back();
  const std::size_t F = student_logits.numel() / C;
  if (F == 0) throw DimensionError("kl: zero frames");
  auto log_probs = [C, F](const Tensor& x) {
    Tensor lp(x.shape());
    for (std::size_t f = 0; f < F; ++f) {
      double mx = kNegInf;
      for (std::size_t k = 0; k < C; ++k) mx = std::max(mx, x[f * C + k]);
      double z = 0.0;
      for (std::size_t k = 0; k < C; ++k) z += std::exp(x[f * C + k] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t k = 0; k < C; ++k) lp[f * C + k] = x[f * C + k] - lse;
    }
    return lp;
  };
  const Tensor ls = log_probs(student_logits.value());
  const Tensor lt = log_probs(teacher_logits);
  double kl = 0.0;
  Tensor grad(ls.shape());
  for (std::size_t i = 0; i < ls.numel(); ++i) {
    const double pt = std::exp(lt[i]);
    if (pt > 0.0) kl += pt * (lt[i] - ls[i]);
    grad[i] = (std::exp(ls[i]) - pt) / static_cast<double>(F);
  }
  kl = std::max(kl / static_cast<double>(F), 0.0);
  return make_op("distill_kl", Tensor::scalar(kl), {student_logits},
                 [grad = std::move(grad)](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   const double g = self.grad.item();
                   auto& gx = p.grad_buffer().storage();
                   for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * grad[i];
                 });
}

Var combined_loss(const Var& l_spk, const Var& l_distill, double alpha) {
  if (alpha < 0.0) throw ConfigError("combined loss: alpha must be >= 0");
  if (alpha == 0.0) return l_spk;
  return add(l_spk, scale(l_distill, alpha));
}

RateMatchConv::RateMatchConv(std::size_t dim) : conv_(dim, dim, 3, 2, 1) {
  add_child("conv", &conv_);
}

Var RateMatchConv::forward(const Var& frames) const {
  if (frames.shape().size() != 3) throw DimensionError("rate match: expected [B, T, d]");
  if (frames.dim(1) < 3) {
    throw DataError("rate match: input too short (" + std::to_string(frames.dim(1)) +
                    " frames, need 3)");
  }
  return conv_.forward(frames);
}

}  // namespace confsv
