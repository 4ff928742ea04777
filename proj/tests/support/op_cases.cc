// tests/support/op_cases.cc

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

#include "op_cases.h"

#include <cmath>
#include <memory>

#include "confsv/conformer.h"
#include "confsv/heads.h"
#include "confsv/losses.h"
#include "confsv/nn.h"
#include "confsv/nn_ops.h"

namespace confsv::testing {

namespace {

// Entries pushed at least `margin` away from `kink`, for piecewise ops.
Var leaf_away_from(const Shape& shape, Rng& rng, double kink, double margin = 0.05) {
  Tensor t = random_tensor(shape, rng);
  for (double& v : t.storage()) {
    if (std::abs(v - kink) < margin) v = kink + (v < kink ? -margin : margin);
  }
  return Var(t, true);
}

Var positive_leaf(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.storage()) v = rng.uniform(0.5, 2.0);
  return Var(t, true);
}

// Scalar probe of a unary op on a fresh [3,4] input.
OpCase unary_case(const std::string& name, Var (*op)(const Var&), bool positive = false,
                  bool kink = false) {
  return {name, [=](Rng& rng) {
            Var x = positive ? positive_leaf({3, 4}, rng)
                             : kink ? leaf_away_from({3, 4}, rng, 0.0) : random_leaf({3, 4}, rng);
            Tensor w = random_tensor({3, 4}, rng);
            return GradCase{[=] { return weighted_sum(op(x), w); }, {x}};
          }};
}

template <typename M>
std::shared_ptr<M> init_module(std::shared_ptr<M> m, Rng& rng) {
  m->initialize(rng.next_u64());
  // Non-trivial affine parameters so their gradients are exercised.
  for (auto& [name, p] : m->named_params()) {
    if (p->init != Init::kFanInUniform) {
      for (double& v : p->var.mutable_value().storage()) v = rng.uniform(0.5, 1.5) * (rng.bernoulli(0.5) ? 1 : -1);
    }
  }
  return m;
}

std::vector<OpCase> build_cases() {
  std::vector<OpCase> c;
  auto binary = [&](const std::string& name, Var (*op)(const Var&, const Var&)) {
    c.push_back({name, [=](Rng& rng) {
                   Var a = random_leaf({2, 3, 2}, rng), b = random_leaf({2, 3, 2}, rng);
                   Tensor w = random_tensor({2, 3, 2}, rng);
                   return GradCase{[=] { return weighted_sum(op(a, b), w); }, {a, b}};
                 }});
  };
  binary("add", add);
  binary("sub", sub);
  binary("mul", mul);
  c.push_back({"scale", [](Rng& rng) {
                 Var a = random_leaf({4}, rng);
                 Tensor w = random_tensor({4}, rng);
                 return GradCase{[=] { return weighted_sum(scale(a, -1.7), w); }, {a}};
               }});
  c.push_back({"add_scalar", [](Rng& rng) {
                 Var a = random_leaf({4}, rng);
                 Tensor w = random_tensor({4}, rng);
                 return GradCase{[=] { return weighted_sum(add_scalar(a, 0.3), w); }, {a}};
               }});
  c.push_back({"add_bias", [](Rng& rng) {
                 Var x = random_leaf({2, 3, 4}, rng), b = random_leaf({4}, rng);
                 Tensor w = random_tensor({2, 3, 4}, rng);
                 return GradCase{[=] { return weighted_sum(add_bias(x, b), w); }, {x, b}};
               }});
  c.push_back({"mul_bias", [](Rng& rng) {
                 Var x = random_leaf({2, 3, 4}, rng), g = random_leaf({4}, rng);
                 Tensor w = random_tensor({2, 3, 4}, rng);
                 return GradCase{[=] { return weighted_sum(mul_bias(x, g), w); }, {x, g}};
               }});
  c.push_back(unary_case("exp", exp));
  c.push_back(unary_case("log", log, true));
  c.push_back(unary_case("sqrt", sqrt, true));
  c.push_back(unary_case("square", square));
  c.push_back(unary_case("tanh", tanh));
  c.push_back(unary_case("sigmoid", sigmoid));
  c.push_back(unary_case("relu", relu, false, true));
  c.push_back(unary_case("swish", swish));
  c.push_back({"clamp_min", [](Rng& rng) {
                 Var x = leaf_away_from({3, 4}, rng, 0.2);
                 Tensor w = random_tensor({3, 4}, rng);
                 return GradCase{[=] { return weighted_sum(clamp_min(x, 0.2), w); }, {x}};
               }});
  c.push_back({"sum", [](Rng& rng) {
                 Var x = random_leaf({3, 4}, rng);
                 return GradCase{[=] { return square(sum(x)); }, {x}};
               }});
  c.push_back({"mean", [](Rng& rng) {
                 Var x = random_leaf({3, 4}, rng);
                 return GradCase{[=] { return square(mean(x)); }, {x}};
               }});
  for (std::size_t dim = 0; dim < 3; ++dim) {
    c.push_back({"sum_dim" + std::to_string(dim), [dim](Rng& rng) {
                   Var x = random_leaf({2, 3, 4}, rng);
                   Shape s{2, 3, 4};
                   s[dim] = 1;
                   Tensor w = random_tensor(s, rng);
                   return GradCase{[=] { return weighted_sum(sum_dim(x, dim, true), w); }, {x}};
                 }});
    c.push_back({"mean_dim" + std::to_string(dim), [dim](Rng& rng) {
                   Var x = random_leaf({2, 3, 4}, rng);
                   Shape s{2, 3, 4};
                   s.erase(s.begin() + static_cast<std::ptrdiff_t>(dim));
                   Tensor w = random_tensor(s, rng);
                   return GradCase{[=] { return weighted_sum(mean_dim(x, dim), w); }, {x}};
                 }});
  }
  c.push_back({"broadcast_dim", [](Rng& rng) {
                 Var x = random_leaf({2, 1, 3}, rng);
                 Tensor w = random_tensor({2, 4, 3}, rng);
                 return GradCase{[=] { return weighted_sum(broadcast_dim(x, 1, 4), w); }, {x}};
               }});
  c.push_back({"reshape", [](Rng& rng) {
                 Var x = random_leaf({2, 6}, rng);
                 Tensor w = random_tensor({3, 4}, rng);
                 return GradCase{[=] { return weighted_sum(reshape(x, {3, 4}), w); }, {x}};
               }});
  c.push_back({"permute", [](Rng& rng) {
                 Var x = random_leaf({2, 3, 4}, rng);
                 Tensor w = random_tensor({4, 2, 3}, rng);
                 return GradCase{[=] { return weighted_sum(permute(x, {2, 0, 1}), w); }, {x}};
               }});
  c.push_back({"concat", [](Rng& rng) {
                 Var a = random_leaf({2, 3, 2}, rng), b = random_leaf({2, 3, 5}, rng);
                 Tensor w = random_tensor({2, 3, 7}, rng);
                 return GradCase{[=] { return weighted_sum(concat({a, b}, 2), w); }, {a, b}};
               }});
  c.push_back({"slice", [](Rng& rng) {
                 Var x = random_leaf({2, 5, 3}, rng);
                 Tensor w = random_tensor({2, 2, 3}, rng);
                 return GradCase{[=] { return weighted_sum(slice(x, 1, 2, 2), w); }, {x}};
               }});
  c.push_back({"matmul", [](Rng& rng) {
                 Var a = random_leaf({3, 4}, rng), b = random_leaf({4, 5}, rng);
                 Tensor w = random_tensor({3, 5}, rng);
                 return GradCase{[=] { return weighted_sum(matmul(a, b), w); }, {a, b}};
               }});
  for (bool tb : {false, true}) {
    c.push_back({tb ? "bmm_transposed" : "bmm", [tb](Rng& rng) {
                   Var a = random_leaf({2, 3, 4}, rng);
                   Var b = random_leaf(tb ? Shape{2, 5, 4} : Shape{2, 4, 5}, rng);
                   Tensor w = random_tensor({2, 3, 5}, rng);
                   return GradCase{[=] { return weighted_sum(bmm(a, b, tb), w); }, {a, b}};
                 }});
  }
  for (bool with_bias : {false, true}) {
    c.push_back({with_bias ? "linear_bias" : "linear", [with_bias](Rng& rng) {
                   Var x = random_leaf({2, 3, 4}, rng), wt = random_leaf({5, 4}, rng), b = random_leaf({5}, rng);
                   Tensor w = random_tensor({2, 3, 5}, rng);
                   std::vector<Var> in{x, wt};
                   if (with_bias) in.push_back(b);
                   return GradCase{[=] { return weighted_sum(linear(x, wt, with_bias ? &b : nullptr), w); }, in};
                 }});
  }
  c.push_back({"softmax", [](Rng& rng) {
                 Var x = random_leaf({3, 5}, rng);
                 Tensor w = random_tensor({3, 5}, rng);
                 return GradCase{[=] { return weighted_sum(softmax(x), w); }, {x}};
               }});
  c.push_back({"log_softmax", [](Rng& rng) {
                 Var x = random_leaf({3, 5}, rng);
                 Tensor w = random_tensor({3, 5}, rng);
                 return GradCase{[=] { return weighted_sum(log_softmax(x), w); }, {x}};
               }});
  c.push_back({"layer_norm", [](Rng& rng) {
                 Var x = random_leaf({2, 3, 6}, rng), g = random_leaf({6}, rng), b = random_leaf({6}, rng);
                 Tensor w = random_tensor({2, 3, 6}, rng);
                 return GradCase{[=] { return weighted_sum(layer_norm(x, g, b), w); }, {x, g, b}};
               }});
  c.push_back({"batch_norm_train", [](Rng& rng) {
                 Var x = random_leaf({3, 4, 5}, rng), g = random_leaf({5}, rng), b = random_leaf({5}, rng);
                 Tensor w = random_tensor({3, 4, 5}, rng);
                 auto stats = std::make_shared<BatchNormStats>(BatchNormStats{Tensor({5}, 0.0), Tensor({5}, 1.0)});
                 return GradCase{[=] { return weighted_sum(batch_norm(x, g, b, *stats, true), w); }, {x, g, b}, 0,
                                 stats};
               }});
  c.push_back({"batch_norm_eval", [](Rng& rng) {
                 Var x = random_leaf({3, 4, 5}, rng), g = random_leaf({5}, rng), b = random_leaf({5}, rng);
                 Tensor w = random_tensor({3, 4, 5}, rng);
                 auto stats = std::make_shared<BatchNormStats>(
                     BatchNormStats{random_tensor({5}, rng), positive_leaf({5}, rng).value()});
                 return GradCase{[=] { return weighted_sum(batch_norm(x, g, b, *stats, false), w); }, {x, g, b}, 0,
                                 stats};
               }});
  c.push_back({"glu", [](Rng& rng) {
                 Var x = random_leaf({2, 3, 8}, rng);
                 Tensor w = random_tensor({2, 3, 4}, rng);
                 return GradCase{[=] { return weighted_sum(glu(x), w); }, {x}};
               }});
  c.push_back({"dropout", [](Rng& rng) {
                 Var x = random_leaf({4, 6}, rng);
                 Tensor w = random_tensor({4, 6}, rng);
                 const std::uint64_t mask_seed = rng.next_u64();
                 return GradCase{[=] {
                                   Rng r(mask_seed);
                                   return weighted_sum(dropout(x, 0.3, &r, true), w);
                                 },
                                 {x}};
               }});
  for (std::size_t stride : {1, 2}) {
    c.push_back({"conv2d_s" + std::to_string(stride), [stride](Rng& rng) {
                   Var x = random_leaf({2, 2, 5, 6}, rng), k = random_leaf({3, 2, 3, 3}, rng), b = random_leaf({3}, rng);
                   const std::size_t ho = (5 + 2 - 3) / stride + 1, wo = (6 + 2 - 3) / stride + 1;
                   Tensor w = random_tensor({2, 3, ho, wo}, rng);
                   return GradCase{[=] { return weighted_sum(conv2d(x, k, &b, stride, 1), w); }, {x, k, b}};
                 }});
    c.push_back({"conv1d_s" + std::to_string(stride), [stride](Rng& rng) {
                   Var x = random_leaf({2, 7, 3}, rng), k = random_leaf({4, 3, 3}, rng), b = random_leaf({4}, rng);
                   Tensor w = random_tensor({2, (7 + 2 - 3) / stride + 1, 4}, rng);
                   return GradCase{[=] { return weighted_sum(conv1d(x, k, &b, stride, 1), w); }, {x, k, b}};
                 }});
  }
  c.push_back({"depthwise_conv1d", [](Rng& rng) {
                 Var x = random_leaf({2, 7, 3}, rng), k = random_leaf({3, 5}, rng), b = random_leaf({3}, rng);
                 Tensor w = random_tensor({2, 7, 3}, rng);
                 return GradCase{[=] { return weighted_sum(depthwise_conv1d(x, k, &b, 2), w); }, {x, k, b}};
               }});
  c.push_back({"rel_shift", [](Rng& rng) {
                 Var x = random_leaf({2, 4, 7}, rng);
                 Tensor w = random_tensor({2, 4, 4}, rng);
                 return GradCase{[=] { return weighted_sum(rel_shift(x), w); }, {x}};
               }});
  c.push_back({"l2_normalize", [](Rng& rng) {
                 Var x = random_leaf({3, 5}, rng);
                 Tensor w = random_tensor({3, 5}, rng);
                 return GradCase{[=] { return weighted_sum(l2_normalize(x), w); }, {x}};
               }});
  c.push_back({"aam_logits", [](Rng& rng) {
                 Tensor cs(Shape{3, 4});
                 for (double& v : cs.storage()) v = rng.uniform(-0.9, 0.9);
                 Var x(cs, true);
                 Tensor w = random_tensor({3, 4}, rng);
                 const std::vector<std::size_t> labels{1, 3, 0};
                 return GradCase{[=] { return weighted_sum(aam_logits(x, labels, 32.0, 0.2), w); }, {x}};
               }});
  c.push_back({"cross_entropy", [](Rng& rng) {
                 Var x = random_leaf({3, 5}, rng, 2.0);
                 const std::vector<std::size_t> labels{4, 0, 2};
                 return GradCase{[=] { return cross_entropy(x, labels); }, {x}};
               }});
  c.push_back({"ctc_loss", [](Rng& rng) {
                 Var x = random_leaf({7, 4}, rng);
                 const std::vector<int> target{1, 3, 3};
                 return GradCase{[=] { return ctc_loss(x, target); }, {x}};
               }});
  c.push_back({"ctc_loss_batch", [](Rng& rng) {
                 Var x = random_leaf({2, 6, 3}, rng);
                 const std::vector<std::vector<int>> targets{{1, 2}, {2}};
                 return GradCase{[=] { return ctc_loss_batch(x, targets); }, {x}};
               }});
  c.push_back({"distill_kl_loss", [](Rng& rng) {
                 Var s = random_leaf({2, 3, 5}, rng);
                 const Tensor t = random_tensor({2, 3, 5}, rng, 2.0);
                 return GradCase{[=] { return distill_kl_loss(s, t); }, {s}};
               }});
  c.push_back({"combined_loss", [](Rng& rng) {
                 Var a = random_leaf({}, rng), b = random_leaf({}, rng);
                 return GradCase{[=] { return square(combined_loss(a, b, 0.7)); }, {a, b}};
               }});

  // Layers, checked through their parameters and inputs.
  BlockConfig bc{8, 2, 16, 3, 0.0, 0.1};
  auto layer = [&](const std::string& name, auto factory, Shape in_shape, auto fwd) {
    c.push_back({name, [=](Rng& rng) {
                   auto m = init_module(factory(), rng);
                   Var x = random_leaf(in_shape, rng);
                   Var probe = fwd(*m, x);
                   Tensor w = random_tensor(probe.shape(), rng);
                   std::vector<Var> in = m->parameters();
                   in.push_back(x);
                   return GradCase{[=] { return weighted_sum(fwd(*m, x), w); }, in, 6, m};
                 }});
  };
  const ForwardCtx train{true, nullptr};
  layer("feed_forward", [=] { return std::make_shared<FeedForward>(bc); }, Shape{2, 5, 8},
        [=](FeedForward& m, const Var& x) { return m.forward(x, train); });
  layer("rel_pos_attention", [=] { return std::make_shared<RelPosAttention>(bc); }, Shape{2, 5, 8},
        [=](RelPosAttention& m, const Var& x) { return m.forward(x, train); });
  layer("conv_module", [=] { return std::make_shared<ConvModule>(bc); }, Shape{2, 5, 8},
        [=](ConvModule& m, const Var& x) { return m.forward(x, train); });
  layer("conformer_block", [=] { return std::make_shared<ConformerBlock>(bc); }, Shape{2, 5, 8},
        [=](ConformerBlock& m, const Var& x) { return m.forward(x, train); });
  EncoderConfig sub_cfg = EncoderConfig::toy();
  sub_cfg.dim = 4;
  sub_cfg.n_mels = 8;
  layer("subsampling", [=] { return std::make_shared<Subsampling>(sub_cfg); }, Shape{2, 9, 8},
        [](Subsampling& m, const Var& x) { return m.forward(x); });
  layer("attentive_stats_pool", [] { return std::make_shared<AttentiveStatsPool>(6, 4); }, Shape{3, 5, 6},
        [=](AttentiveStatsPool& m, const Var& x) { return m.forward(x, train); });
  layer("embedding_head", [] { return std::make_shared<EmbeddingHead>(6, 4); }, Shape{3, 6},
        [=](EmbeddingHead& m, const Var& x) { return m.forward(x, train); });
  layer("mfa_concat", [] { return std::make_shared<MfaConcat>(6); }, Shape{2, 4, 6},
        [](MfaConcat& m, const Var& x) { return m.forward({slice(x, 2, 0, 2), slice(x, 2, 2, 4)}); });
  layer("rate_match_conv", [] { return std::make_shared<RateMatchConv>(4); }, Shape{2, 7, 4},
        [](RateMatchConv& m, const Var& x) { return m.forward(x); });
  layer("aam_softmax", [] { return std::make_shared<AamSoftmax>(4, 6); }, Shape{3, 6},
        [](AamSoftmax& m, const Var& x) { return m.loss(x, {0, 3, 1}, 32.0, 0.2); });
  return c;
}

struct TinySpeakerNet {
  ConformerEncoder encoder;
  SpeakerHead head;
  AamSoftmax classifier;
  explicit TinySpeakerNet(const EncoderConfig& cfg)
      : encoder(cfg), head(cfg.layers * cfg.dim), classifier(3, kEmbeddingDim) {}
};

}  // namespace

const std::vector<OpCase>& differentiable_op_cases() {
  static const std::vector<OpCase> cases = build_cases();
  return cases;
}

GradCase full_speaker_path_case(Rng& rng) {
  EncoderConfig cfg = EncoderConfig::toy();
  cfg.layers = 2;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.hidden = 16;
  cfg.conv_kernel = 3;
  cfg.n_mels = 8;
  cfg.dropout = 0.0;
  auto net = std::make_shared<TinySpeakerNet>(cfg);
  net->encoder.initialize(rng.next_u64(), "encoder");
  net->head.initialize(rng.next_u64(), "head");
  net->classifier.initialize(rng.next_u64(), "classifier");
  Var x = random_leaf({3, 13, 8}, rng);
  const std::vector<std::size_t> labels{0, 2, 1};
  std::vector<Var> inputs = net->encoder.parameters();
  for (const Var& p : net->head.parameters()) inputs.push_back(p);
  for (const Var& p : net->classifier.parameters()) inputs.push_back(p);
  inputs.push_back(x);
  auto loss = [net, x, labels] {
    const ForwardCtx ctx{true, nullptr};
    const Var emb = net->head.forward(net->encoder.forward(x, ctx), ctx);
    return net->classifier.loss(emb, labels, 32.0, 0.2);
  };
  return GradCase{loss, inputs, 4, net};
}

GradCheckResult run_case(const GradCase& c, std::uint64_t coord_seed) {
  return gradcheck(c.loss, c.inputs, c.max_coords, coord_seed);
}

}  // namespace confsv::testing
