// tests/unit/config_test.cc

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

#include "confsv/config.h"
#include "confsv/error.h"
#include "fixtures.h"

namespace confsv {
namespace {

TEST(RunConfigIni, ParsesSectionsAndOverridesPreset) {
  const RunConfig c = parse_run_config(
      "[experiment]\nname = x\nseed = 99\nstrategy = distill\n"
      "[encoder]\npreset = medium\nlayers = 9\nsubsample = 2\n"
      "[loss]\nalpha = 0.5\n[transfer]\nteacher = t.ckpt\nfrozen_epochs = 0\n"
      "[adaptation]\nvariant = V3\nlayers = 4\nlight_layers = 2\n"
      "[data]\nspeed_perturb = false\n");
  EXPECT_EQ(c.name, "x");
  EXPECT_EQ(*c.seed, 99u);
  EXPECT_EQ(c.strategy, Strategy::kDistill);
  EXPECT_EQ(c.encoder.dim, 256u);
  EXPECT_EQ(c.encoder.layers, 9u);
  EXPECT_EQ(c.encoder.subsample, 2u);
  EXPECT_DOUBLE_EQ(c.loss.alpha, 0.5);
  EXPECT_EQ(c.transfer.teacher, "t.ckpt");
  EXPECT_EQ(c.adaptation.variant, AdaptVariant::kV3);
  EXPECT_FALSE(c.data.speed_perturb);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfigIni, RoundTripsThroughText) {
  RunConfig a = testing::toy_run_config(17, 3);
  a.strategy = Strategy::kPretrainedInit;
  a.transfer.init = "/tmp/asr.ckpt";
  a.loss.margin = 0.25;
  a.lmft.enabled = true;
  const RunConfig b = parse_run_config(run_config_to_ini(a));
  EXPECT_EQ(run_config_to_ini(b), run_config_to_ini(a));
  EXPECT_EQ(*b.seed, 17u);
  EXPECT_EQ(b.encoder.dim, a.encoder.dim);
  EXPECT_DOUBLE_EQ(b.loss.margin, 0.25);
  EXPECT_TRUE(b.lmft.enabled);
}

TEST(RunConfigIni, RejectsBadInput) {
  EXPECT_THROW(parse_run_config("[experiment]\nseed = 1\n[bogus]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[experiment]\nseed = 1\ncolour = red\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[optim]\nepochs = many\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[encoder]\npreset = gigantic\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[experiment]\nstrategy = magic\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[experiment\nseed = 1\n"), ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent/run.ini"), ConfigError);
}

TEST(RunConfigValidate, SeedIsMandatory) {
  RunConfig c;
  EXPECT_THROW(c.require_seed(), ConfigError);
  EXPECT_THROW(c.validate(), ConfigError);
  c.seed = 0;
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfigValidate, RangesAndStrategyFields) {
  auto bad = [](auto mutate) {
    RunConfig c = testing::toy_run_config(1);
    mutate(c);
    return c;
  };
  EXPECT_THROW(bad([](RunConfig& c) { c.optim.lr = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](RunConfig& c) { c.optim.batch_size = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](RunConfig& c) { c.loss.margin = 2.0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](RunConfig& c) { c.loss.alpha = -0.1; }).validate(), ConfigError);
  EXPECT_THROW(bad([](RunConfig& c) { c.data.augment_prob = 1.1; }).validate(), ConfigError);
  EXPECT_THROW(bad([](RunConfig& c) { c.scoring.top_k = 50; }).validate(), ConfigError);
  EXPECT_THROW(bad([](RunConfig& c) { c.transfer.frozen_epochs = -1; }).validate(), ConfigError);
  EXPECT_THROW(bad([](RunConfig& c) { c.strategy = Strategy::kPretrainedInit; }).validate(), ConfigError);
  EXPECT_THROW(bad([](RunConfig& c) { c.strategy = Strategy::kDistill; }).validate(), ConfigError);
  EXPECT_THROW(bad([](RunConfig& c) { c.encoder.heads = 5; }).validate(), ConfigError);
}

TEST(RunConfigIni, ShippedConfigsLoad) {
  const RunConfig c = load_run_config(CONFSV_SOURCE_DIR "/configs/toy.ini");
  EXPECT_EQ(c.name, "toy");
  EXPECT_EQ(c.encoder.layers, 2u);
  EXPECT_EQ(c.encoder.dim, 32u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Strategy, Names) {
  for (Strategy s : {Strategy::kScratch, Strategy::kPretrainedInit, Strategy::kDistill, Strategy::kAdapt})
    EXPECT_EQ(parse_strategy(strategy_name(s)), s);
  EXPECT_EQ(strategy_name(Strategy::kPretrainedInit), "pretrained-init");
}

}  // namespace
}  // namespace confsv
