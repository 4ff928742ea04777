// tests/unit/conformer_test.cc

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

#include "confsv/conformer.h"
#include "confsv/error.h"
#include "gradcheck.h"
#include "oracles.h"

namespace confsv {
namespace {

using testing::random_tensor;

EncoderConfig tiny_config() {
  EncoderConfig c = EncoderConfig::toy();
  c.dim = 8;
  c.heads = 2;
  c.hidden = 16;
  c.conv_kernel = 3;
  c.n_mels = 12;
  return c;
}

TEST(EncoderConfig, PresetsFollowTheEncoderTable) {
  const struct {
    const char* name;
    std::size_t layers, dim, heads, hidden, subsample;
  } rows[] = {{"small", 16, 176, 4, 704, 4},     {"medium", 18, 256, 4, 1024, 4},
              {"large", 18, 512, 8, 2048, 4},    {"half_small", 8, 176, 4, 704, 2},
              {"half_medium", 9, 256, 4, 1024, 2}, {"half_large", 9, 512, 8, 2048, 2}};
  for (const auto& r : rows) {
    const EncoderConfig c = EncoderConfig::named(r.name);
    EXPECT_EQ(c.layers, r.layers) << r.name;
    EXPECT_EQ(c.dim, r.dim) << r.name;
    EXPECT_EQ(c.heads, r.heads) << r.name;
    EXPECT_EQ(c.hidden, r.hidden) << r.name;
    EXPECT_EQ(c.subsample, r.subsample) << r.name;
    EXPECT_EQ(c.conv_kernel, 31u);
    EXPECT_EQ(c.n_mels, 80u);
  }
  EXPECT_THROW(EncoderConfig::named("huge"), ConfigError);
}

TEST(EncoderConfig, Validation) {
  EncoderConfig c = tiny_config();
  EXPECT_NO_THROW(c.validate());
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.conv_kernel = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.subsample = 8;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.layers = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Subsampling, FrameArithmetic) {
  EncoderConfig c = EncoderConfig::small();
  EXPECT_EQ(c.subsampled_frames(499), 125u);
  EXPECT_EQ(c.subsampled_mels(), 20u);
  c.subsample = 2;
  EXPECT_EQ(c.subsampled_frames(499), 250u);
  EXPECT_EQ(c.subsampled_mels(), 40u);
}

TEST(Subsampling, OutputShapeMatchesArithmetic) {
  for (std::size_t rate : {2, 4}) {
    EncoderConfig c = tiny_config();
    c.subsample = rate;
    Subsampling s(c);
    s.initialize(1);
    Rng rng(rate);
    for (std::size_t T : {5, 8, 13, 20}) {
      const Var y = s.forward(Var(random_tensor({2, T, 12}, rng)));
      EXPECT_EQ(y.shape(), (Shape{2, c.subsampled_frames(T), 8}));
    }
    EXPECT_THROW(s.forward(Var(Tensor({1, 8, 11}))), DimensionError);
  }
}

TEST(RelativePositions, SinusoidTable) {
  const Tensor pe = relative_position_table(3, 4);  // distances 2, 1, 0, -1, -2
  ASSERT_EQ(pe.shape(), (Shape{5, 4}));
  EXPECT_DOUBLE_EQ(pe.at(0, 0), std::sin(2.0));
  EXPECT_DOUBLE_EQ(pe.at(0, 1), std::cos(2.0));
  EXPECT_NEAR(pe.at(0, 2), std::sin(2.0 / 100.0), 1e-15);
  EXPECT_DOUBLE_EQ(pe.at(2, 0), 0.0);
  EXPECT_DOUBLE_EQ(pe.at(2, 1), 1.0);
  EXPECT_DOUBLE_EQ(pe.at(4, 0), -std::sin(2.0));
}

TEST(RelPosAttention, MatchesExplicitLoops) {
  BlockConfig bc{8, 2, 16, 3, 0.0, 0.1};
  RelPosAttention att(bc);
  att.initialize(11);
  Rng rng(12);
  for (Param* p : {&att.bias_u(), &att.bias_v()})
    for (double& v : p->var.mutable_value().storage()) v = rng.normal();
  for (std::size_t T : {1, 2, 5}) {
    const Tensor x = random_tensor({2, T, 8}, rng);
    const Tensor got = att.forward(Var(x), ForwardCtx{}).value();
    const Tensor want = testing::naive_rel_pos_attention(att, x, 2);
    for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], want[i], 1e-11);
  }
}

TEST(RelPosAttention, WeightsAreDistributions) {
  BlockConfig bc{8, 2, 16, 3, 0.0, 0.1};
  RelPosAttention att(bc);
  att.initialize(3);
  Rng rng(4);
  Tensor w;
  att.forward(Var(random_tensor({2, 6, 8}, rng)), ForwardCtx{}, &w);
  ASSERT_EQ(w.shape(), (Shape{2, 2, 6, 6}));
  for (std::size_t r = 0; r < 2 * 2 * 6; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 6; ++j) s += w[r * 6 + j];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(RelPosAttention, ContentOnlyAttentionIsPermutationEquivariant) {
  BlockConfig bc{8, 2, 16, 3, 0.0, 0.1};
  RelPosAttention att(bc);
  att.initialize(5);
  Rng rng(6);
  const Tensor x = random_tensor({1, 5, 8}, rng);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  Tensor xp({1, 5, 8});
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t d = 0; d < 8; ++d) xp.at(0, t, d) = x.at(0, perm[t], d);
  const Tensor y = att.forward(Var(x), ForwardCtx{}, nullptr, false).value();
  const Tensor yp = att.forward(Var(xp), ForwardCtx{}, nullptr, false).value();
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t d = 0; d < 8; ++d) EXPECT_NEAR(yp.at(0, t, d), y.at(0, perm[t], d), 1e-12);
  // The position term breaks the symmetry.
  const Tensor z = att.forward(Var(x), ForwardCtx{}).value();
  const Tensor zp = att.forward(Var(xp), ForwardCtx{}).value();
  double diff = 0;
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t d = 0; d < 8; ++d) diff += std::abs(zp.at(0, t, d) - z.at(0, perm[t], d));
  EXPECT_GT(diff, 1e-6);
}

TEST(ConformerBlock, ResidualPathAndShape) {
  BlockConfig bc{8, 2, 16, 3, 0.0, 0.1};
  ConformerBlock block(bc);
  block.initialize(7);
  Rng rng(8);
  const Var y = block.forward(Var(random_tensor({3, 4, 8}, rng)), ForwardCtx{});
  EXPECT_EQ(y.shape(), (Shape{3, 4, 8}));
  // Final layer norm: each frame standardized (unit gain, zero shift at init).
  for (std::size_t r = 0; r < 12; ++r) {
    double m = 0;
    for (std::size_t d = 0; d < 8; ++d) m += y.value()[r * 8 + d] / 8;
    EXPECT_NEAR(m, 0.0, 1e-12);
  }
}

TEST(ConformerEncoder, TapsAndTruncation) {
  EncoderConfig c = tiny_config();
  c.layers = 3;
  ConformerEncoder enc(c);
  enc.initialize(9);
  Rng rng(10);
  const Var x(random_tensor({2, 17, 12}, rng));
  const auto taps = enc.forward(x, ForwardCtx{});
  ASSERT_EQ(taps.size(), 3u);
  for (const Var& t : taps) EXPECT_EQ(t.shape(), (Shape{2, c.subsampled_frames(17), 8}));
  const auto two = enc.forward(x, ForwardCtx{}, 2);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[1].value().storage(), taps[1].value().storage());

  auto cut = truncate_encoder(enc, 2);
  EXPECT_EQ(cut->num_layers(), 2u);
  const auto cut_taps = cut->forward(x, ForwardCtx{});
  EXPECT_EQ(cut_taps[1].value().storage(), taps[1].value().storage());
  EXPECT_THROW(truncate_encoder(enc, 4), ConfigError);
}

TEST(ConformerEncoder, InferenceIsPerUtterance) {
  EncoderConfig c = tiny_config();
  ConformerEncoder enc(c);
  enc.initialize(13);
  Rng rng(14);
  const Tensor x = random_tensor({2, 9, 12}, rng);
  const auto both = enc.forward(Var(x), ForwardCtx{});
  Tensor first({1, 9, 12});
  std::copy(x.storage().begin(), x.storage().begin() + 9 * 12, first.storage().begin());
  const auto one = enc.forward(Var(first), ForwardCtx{});
  const Tensor& b = both.back().value();
  const Tensor& o = one.back().value();
  for (std::size_t i = 0; i < o.numel(); ++i) EXPECT_NEAR(o[i], b[i], 1e-12);
}

TEST(ConformerEncoder, CopyStateMakesEncodersAgree) {
  EncoderConfig c = tiny_config();
  ConformerEncoder a(c), b(c);
  a.initialize(1);
  b.initialize(2);
  const std::size_t copied = copy_state(a, b);
  EXPECT_EQ(copied, a.named_params().size() + a.named_buffers().size());
  Rng rng(3);
  const Var x(random_tensor({1, 9, 12}, rng));
  EXPECT_EQ(a.forward(x, ForwardCtx{}).back().value().storage(),
            b.forward(x, ForwardCtx{}).back().value().storage());
}

TEST(ConformerEncoder, DropoutNeedsRngOnlyWhenTraining) {
  EncoderConfig c = tiny_config();
  c.dropout = 0.1;
  ConformerEncoder enc(c);
  enc.initialize(1);
  const Var x(Tensor({1, 9, 12}, 0.5));
  EXPECT_NO_THROW(enc.forward(x, ForwardCtx{}));
  EXPECT_THROW(enc.forward(x, ForwardCtx{true, nullptr}), ContractError);
  Rng r1(4), r2(4);
  EXPECT_EQ(enc.forward(x, ForwardCtx{true, &r1}).back().value().storage(),
            enc.forward(x, ForwardCtx{true, &r2}).back().value().storage());
}

}  // namespace
}  // namespace confsv
