// tests/unit/heads_losses_test.cc

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

#include <gtest/gtest.h>

#include <cmath>

#include "confsv/error.h"
#include "confsv/heads.h"
#include "confsv/losses.h"
#include "confsv/nn_ops.h"
#include "gradcheck.h"
#include "oracles.h"
#include "suites.h"

namespace confsv {
namespace {

using testing::random_tensor;

TEST(AamSoftmax, MarginOnTargetOnly) {
  const Tensor c = Tensor::matrix(2, 3, {0.5, -0.2, 0.9, 0.1, 0.3, -0.7});
  const std::vector<std::size_t> labels{2, 0};
  const Tensor z = aam_logits(Var(c), labels, 32.0, 0.2).value();
  EXPECT_NEAR(z.at(0, 2), 32.0 * std::cos(std::acos(0.9) + 0.2), 1e-12);
  EXPECT_NEAR(z.at(1, 0), 32.0 * std::cos(std::acos(0.1) + 0.2), 1e-12);
  EXPECT_DOUBLE_EQ(z.at(0, 0), 32.0 * 0.5);
  EXPECT_DOUBLE_EQ(z.at(1, 2), 32.0 * -0.7);
  const Tensor plain = aam_logits(Var(c), labels, 10.0, 0.0).value();
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(plain[i], 10.0 * c[i], 1e-12);
  EXPECT_THROW(aam_logits(Var(c), {3, 0}, 32.0, 0.2), IndexError);
  EXPECT_THROW(aam_logits(Var(c), labels, 32.0, 2.0), ConfigError);
}

TEST(AamSoftmax, CrossEntropyMatchesFormula) {
  Rng rng(1);
  const Tensor z = random_tensor({3, 4}, rng, 3.0);
  const std::vector<std::size_t> labels{1, 0, 3};
  double want = 0;
  for (std::size_t b = 0; b < 3; ++b) {
    double s = 0;
    for (std::size_t k = 0; k < 4; ++k) s += std::exp(z.at(b, k));
    want += (std::log(s) - z.at(b, labels[b])) / 3.0;
  }
  EXPECT_NEAR(cross_entropy(Var(z), labels).item(), want, 1e-12);
}

TEST(AamSoftmax, LossGrowsWithMargin) {
  AamSoftmax head(5, 8);
  head.initialize(2);
  Rng rng(3);
  const Var e(random_tensor({6, 8}, rng));
  const std::vector<std::size_t> labels{0, 1, 2, 3, 4, 0};
  double prev = -1;
  for (double m : {0.0, 0.1, 0.2, 0.3, 0.5}) {
    const double l = head.loss(e, labels, 32.0, m).item();
    EXPECT_GT(l, prev);
    prev = l;
  }
  const Tensor cs = head.cosines(e).value();
  for (double v : cs.storage()) EXPECT_LE(std::abs(v), 1.0 + 1e-12);
}

TEST(Ctc, MatchesEnumerationExhaustively) {
  const auto r = testing::ctc_exhaustive_suite(5, 3, 2, 7);
  EXPECT_GT(r.cases, 50u);
  EXPECT_GT(r.infeasible, 0u);
  EXPECT_LT(r.max_abs_error, 1e-10) << r.worst;
}

TEST(Ctc, HandComputedTwoFrameCase) {
  // T=2, V=1, target [1]: paths 1-1, 1-blank, blank-1.
  const Tensor logits = Tensor::matrix(2, 2, {0.0, 0.0, 0.0, 0.0});
  EXPECT_NEAR(ctc_loss(Var(logits), {1}).item(), -std::log(0.75), 1e-14);
  EXPECT_NEAR(ctc_loss(Var(logits), {}).item(), -std::log(0.25), 1e-14);
}

TEST(Ctc, Errors) {
  const Var logits(Tensor({3, 3}));
  EXPECT_THROW(ctc_loss(logits, {1, 1, 1}), DataError);  // needs 5 frames
  EXPECT_THROW(ctc_loss(logits, {3}), IndexError);
  EXPECT_THROW(ctc_loss(logits, {0}), IndexError);
  EXPECT_EQ(ctc_min_frames({1, 1, 2, 2, 2}), 8u);
  EXPECT_EQ(ctc_min_frames({}), 0u);
}

TEST(Ctc, BatchIsMeanOfSequences) {
  Rng rng(4);
  const Tensor x = random_tensor({2, 5, 3}, rng);
  const std::vector<std::vector<int>> t{{1, 2}, {2, 2}};
  double want = 0;
  for (std::size_t b = 0; b < 2; ++b) {
    Tensor one({5, 3});
    std::copy(x.storage().begin() + static_cast<long>(b * 15), x.storage().begin() + static_cast<long>(b * 15 + 15),
              one.storage().begin());
    want += testing::ctc_brute_force(one, t[b]) / 2;
  }
  EXPECT_NEAR(ctc_loss_batch(Var(x), t).item(), want, 1e-10);
}

TEST(Ctc, GreedyDecodeCollapses) {
  // argmax per frame: 1 1 0 1 2 2 0
  Tensor l({7, 3}, 0.0);
  const int best[] = {1, 1, 0, 1, 2, 2, 0};
  for (std::size_t t = 0; t < 7; ++t) l.at(t, static_cast<std::size_t>(best[t])) = 1.0;
  EXPECT_EQ(ctc_greedy_decode(l), (std::vector<int>{1, 1, 2}));
}

TEST(Distillation, KlProperties) {
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const Tensor s = random_tensor({2, 4, 6}, rng, 2.0), t = random_tensor({2, 4, 6}, rng, 2.0);
    EXPECT_GE(distill_kl_loss(Var(s), t).item(), 0.0);
    EXPECT_NEAR(distill_kl_loss(Var(t), t).item(), 0.0, 1e-15);
    Tensor shifted = t;
    for (double& v : shifted.storage()) v += 3.0;
    EXPECT_NEAR(distill_kl_loss(Var(shifted), t).item(), 0.0, 1e-12);
  }
  // KL(p||q) on one frame by hand.
  const Tensor t = Tensor::matrix(1, 2, {std::log(0.25), std::log(0.75)});
  const Tensor s = Tensor::matrix(1, 2, {std::log(0.5), std::log(0.5)});
  EXPECT_NEAR(distill_kl_loss(Var(s), t).item(), 0.25 * std::log(0.5) + 0.75 * std::log(1.5), 1e-14);
  EXPECT_THROW(distill_kl_loss(Var(Tensor({2, 3})), Tensor({3, 2})), DimensionError);
}

TEST(Distillation, CombinedLoss) {
  const Var a(Tensor::scalar(1.25)), b(Tensor::scalar(0.5));
  EXPECT_DOUBLE_EQ(combined_loss(a, b, 0.0).item(), 1.25);
  EXPECT_DOUBLE_EQ(combined_loss(a, b, 2.0).item(), 2.25);
  EXPECT_THROW(combined_loss(a, b, -1.0), ConfigError);
}

TEST(Distillation, RateMatchHalvesFrames) {
  RateMatchConv rm(4);
  rm.initialize(1);
  for (std::size_t T : {3, 4, 7, 10}) {
    EXPECT_EQ(rm.forward(Var(Tensor({2, T, 4}, 0.1))).shape(), (Shape{2, (T + 1) / 2, 4}));
  }
  EXPECT_THROW(rm.forward(Var(Tensor({1, 1, 4}))), DataError);
}

TEST(Heads, MfaConcatenatesInOrder) {
  MfaConcat mfa(5);
  mfa.initialize(0);
  Rng rng(6);
  const Tensor a = random_tensor({1, 3, 2}, rng), b = random_tensor({1, 3, 3}, rng);
  const Tensor y = mfa.forward({Var(a), Var(b)}).value();
  const Tensor ref = layer_norm(concat({Var(a), Var(b)}, 2), Var(Tensor({5}, 1.0)), Var(Tensor({5}, 0.0))).value();
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  EXPECT_THROW(mfa.forward({Var(a), Var(a)}), DimensionError);
}

TEST(Heads, AttentiveStatsPooling) {
  AttentiveStatsPool pool(4, 6);
  pool.initialize(7);
  Rng rng(8);
  const Tensor h = random_tensor({2, 5, 4}, rng);
  Tensor w;
  const Tensor y = pool.forward(Var(h), ForwardCtx{}, &w).value();
  ASSERT_EQ(y.shape(), (Shape{2, 8}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t d = 0; d < 4; ++d) {
      double s = 0, mu = 0, m2 = 0;
      for (std::size_t t = 0; t < 5; ++t) {
        s += w.at(b, t, d);
        mu += w.at(b, t, d) * h.at(b, t, d);
        m2 += w.at(b, t, d) * h.at(b, t, d) * h.at(b, t, d);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
      EXPECT_NEAR(y.at(b, d), mu, 1e-12);
      EXPECT_NEAR(y.at(b, 4 + d), std::sqrt(std::max(m2 - mu * mu, AttentiveStatsPool::kVarFloor)), 1e-9);
    }
}

TEST(Heads, PoolingIgnoresFrameOrder) {
  AttentiveStatsPool pool(3, 5);
  pool.initialize(9);
  Rng rng(10);
  const Tensor h = random_tensor({1, 6, 3}, rng);
  Tensor hp({1, 6, 3});
  const std::size_t perm[] = {5, 2, 0, 4, 1, 3};
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t d = 0; d < 3; ++d) hp.at(0, t, d) = h.at(0, perm[t], d);
  const Tensor a = pool.forward(Var(h), ForwardCtx{}).value(), b = pool.forward(Var(hp), ForwardCtx{}).value();
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Heads, ConstantInputGivesFlooredStd) {
  AttentiveStatsPool pool(2, 3);
  pool.initialize(11);
  Tensor h({1, 4, 2});
  for (std::size_t t = 0; t < 4; ++t) {
    h.at(0, t, 0) = 1.5;
    h.at(0, t, 1) = -2.0;
  }
  const Tensor y = pool.forward(Var(h), ForwardCtx{}).value();
  EXPECT_NEAR(y[0], 1.5, 1e-12);
  EXPECT_NEAR(y[1], -2.0, 1e-12);
  EXPECT_NEAR(y[2], std::sqrt(AttentiveStatsPool::kVarFloor), 1e-9);
}

TEST(Heads, SpeakerHeadEmbeddingSize) {
  SpeakerHead head(6);
  head.initialize(12);
  Rng rng(13);
  const Var e = head.forward({Var(random_tensor({2, 4, 3}, rng)), Var(random_tensor({2, 4, 3}, rng))},
                             ForwardCtx{});
  EXPECT_EQ(e.shape(), (Shape{2, kEmbeddingDim}));
}

}  // namespace
}  // namespace confsv
