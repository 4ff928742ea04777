// tests/unit/datapipe_test.cc

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
#include <numeric>

#include "confsv/datapipe.h"
#include "confsv/error.h"
#include "fixtures.h"
#include "oracles.h"

namespace confsv {
namespace {

double power(const std::vector<double>& x) {
  double s = 0;
  for (double v : x) s += v * v;
  return s / static_cast<double>(x.size());
}

Utterance tone(std::size_t n, double amp = 0.1) {
  Utterance u;
  u.id = "tone";
  u.wave.resize(n);
  for (std::size_t i = 0; i < n; ++i) u.wave[i] = amp * std::sin(0.05 * static_cast<double>(i) + 0.3);
  return u;
}

TEST(Synth, CorpusIsDeterministic) {
  const Corpus a = synth_corpus(3, 2, 42), b = synth_corpus(3, 2, 42), c = synth_corpus(3, 2, 43);
  ASSERT_EQ(a.utts.size(), 6u);
  EXPECT_EQ(a.num_speakers, 3u);
  for (std::size_t i = 0; i < a.utts.size(); ++i) {
    EXPECT_EQ(a.utts[i].id, b.utts[i].id);
    EXPECT_EQ(a.utts[i].wave, b.utts[i].wave);
    EXPECT_EQ(a.utts[i].tokens, b.utts[i].tokens);
    EXPECT_EQ(a.utts[i].speaker, i / 2);
    EXPECT_GE(a.utts[i].duration(), 1.5 - 0.2);
    EXPECT_LE(a.utts[i].duration(), 3.0 + 0.2);
    EXPECT_EQ(a.utts[i].tokens.size(), a.utts[i].spans.size());
  }
  EXPECT_NE(a.utts[0].wave, c.utts[0].wave);
}

TEST(Crop, ContiguousWindowOfTwoSeconds) {
  const Corpus corpus = synth_corpus(2, 2, 1, SynthOptions{8, 2.5, 3.0, 0.08, 0.2});
  Rng rng(2);
  for (const Utterance& u : corpus.utts) {
    for (int rep = 0; rep < 5; ++rep) {
      const Utterance c = crop(u, 2.0, rng);
      ASSERT_EQ(c.wave.size(), 32000u);
      // Locate the window and require every sample to match.
      std::size_t start = u.wave.size();
      for (std::size_t s = 0; s + 32000 <= u.wave.size(); ++s)
        if (std::equal(c.wave.begin(), c.wave.begin() + 8, u.wave.begin() + static_cast<long>(s))) {
          start = s;
          break;
        }
      ASSERT_LT(start, u.wave.size());
      EXPECT_TRUE(std::equal(c.wave.begin(), c.wave.end(), u.wave.begin() + static_cast<long>(start)));
      for (const TokenSpan& s : c.spans) {
        EXPECT_LT(s.begin, s.end);
        EXPECT_LE(s.end, 32000u);
      }
    }
  }
}

TEST(Crop, ShortInputLoops) {
  Utterance u = tone(10000);
  u.spans = {{1, 1000, 3000}};
  u.tokens = {1};
  Rng rng(3);
  const Utterance c = crop(u, 2.0, rng);
  ASSERT_EQ(c.wave.size(), 32000u);
  for (std::size_t i = 0; i < 32000; ++i) ASSERT_EQ(c.wave[i], u.wave[i % 10000]);
  // Midpoints 2000, 12000, 22000 fall inside; 32000 does not.
  EXPECT_EQ(c.tokens, (std::vector<int>{1, 1, 1}));
  EXPECT_THROW(crop(u, 0.0, rng), ConfigError);
  EXPECT_THROW(crop(Utterance{}, 2.0, rng), DataError);
}

TEST(Augment, ApplicationRate) {
  const Utterance u = tone(64);
  Rng rng(4);
  std::size_t hits = 0;
  std::vector<std::size_t> per_kind(5, 0);
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    const AugmentResult r = augment_onthefly(u, 0.6, rng);
    if (r.kind != AugmentKind::kNone) ++hits;
    ++per_kind[static_cast<std::size_t>(r.kind)];
  }
  EXPECT_NEAR(static_cast<double>(hits) / n, 0.6, 0.01);
  for (std::size_t k = 1; k < 5; ++k) EXPECT_NEAR(static_cast<double>(per_kind[k]) / n, 0.15, 0.01);
  for (int i = 0; i < 200; ++i) {
    const AugmentResult none = augment_onthefly(u, 0.0, rng);
    EXPECT_EQ(none.kind, AugmentKind::kNone);
    EXPECT_EQ(none.utt.wave, u.wave);
    const AugmentResult all = augment_onthefly(u, 1.0, rng);
    EXPECT_NE(all.kind, AugmentKind::kNone);
    if (all.kind != AugmentKind::kReverb) {
      EXPECT_GE(all.snr_db, 0.0);
      EXPECT_LE(all.snr_db, 20.0);
    }
  }
  EXPECT_THROW(augment_onthefly(u, 1.5, rng), ConfigError);
}

TEST(Augment, NoiseHitsTargetSnr) {
  const Utterance u = tone(4000, 0.05);
  Rng rng(5);
  for (AugmentKind k : {AugmentKind::kAmbient, AugmentKind::kMusic, AugmentKind::kBabble}) {
    const NoiseSignal noise = make_noise(k, 1500, rng);
    for (double snr : {0.0, 5.0, 20.0}) {
      const Utterance y = add_noise(u, noise.wave, snr);
      std::vector<double> added(u.wave.size());
      for (std::size_t i = 0; i < added.size(); ++i) added[i] = y.wave[i] / y.gain - u.wave[i];
      EXPECT_NEAR(10.0 * std::log10(power(u.wave) / power(added)), snr, 1e-6) << augment_name(k);
    }
  }
  EXPECT_EQ(add_noise(u, {0.1}, kNoNoise).wave, u.wave);
  EXPECT_THROW(add_noise(u, {0.0, 0.0}, 10.0), DataError);
}

TEST(Augment, BabbleSourceCount) {
  Rng rng(6);
  std::vector<bool> seen(9, false);
  for (int i = 0; i < 200; ++i) {
    const NoiseSignal n = make_noise(AugmentKind::kBabble, 800, rng);
    ASSERT_GE(n.sources, 3u);
    ASSERT_LE(n.sources, 8u);
    seen[n.sources] = true;
  }
  for (std::size_t s = 3; s <= 8; ++s) EXPECT_TRUE(seen[s]) << s;
}

TEST(Augment, ClippingRenormalizes) {
  const Utterance u = tone(2000, 0.9);
  std::vector<double> noise(2000);
  for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = i % 2 ? 1.0 : -1.0;
  const Utterance y = add_noise(u, noise, 0.0);
  double p = 0;
  for (double v : y.wave) p = std::max(p, std::abs(v));
  EXPECT_NEAR(p, 1.0, 1e-12);
  EXPECT_LT(y.gain, 1.0);
}

TEST(Reverb, ImpulsesAndOracle) {
  const Utterance u = tone(3000, 0.4);
  EXPECT_EQ(reverb(u, {1.0}).wave.size(), u.wave.size());
  for (std::size_t i = 0; i < u.wave.size(); ++i) EXPECT_NEAR(reverb(u, {1.0}).wave[i], u.wave[i], 1e-12);
  const Utterance d = reverb(u, {0.0, 0.0, 0.0, 1.0});
  for (std::size_t i = 0; i < u.wave.size(); ++i) EXPECT_NEAR(d.wave[i], i < 3 ? 0.0 : u.wave[i - 3], 1e-12);

  Rng rng(7);
  const std::vector<double> rir = make_rir(rng);
  EXPECT_EQ(rir[0], 1.0);
  std::vector<double> ref = testing::naive_convolve(u.wave, rir);
  ref.resize(u.wave.size());
  double pr = 0, pu = 0;
  for (double v : ref) pr = std::max(pr, std::abs(v));
  for (double v : u.wave) pu = std::max(pu, std::abs(v));
  const Utterance y = reverb(u, rir);
  for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(y.wave[i], ref[i] * pu / pr, 1e-10);
  EXPECT_THROW(reverb(u, {}), ConfigError);
}

TEST(SpeedPerturb, LengthAndLabels) {
  Utterance u = tone(16000);
  u.speaker = 3;
  u.spans = {{2, 1000, 9000}};
  u.tokens = {2};
  const Utterance slow = speed_perturb(u, 0.9, 10), fast = speed_perturb(u, 1.1, 10);
  EXPECT_EQ(slow.wave.size(), 17778u);
  EXPECT_EQ(fast.wave.size(), 14545u);
  EXPECT_EQ(slow.speaker, 13u);
  EXPECT_EQ(fast.speaker, 23u);
  EXPECT_EQ(speed_perturb(u, 1.0, 10).speaker, 3u);
  EXPECT_EQ(slow.spans[0].begin, 1111u);
  EXPECT_EQ(fast.spans[0].end, 8182u);
  EXPECT_EQ(slow.tokens, u.tokens);
  // Interpolation at integer positions reproduces the source.
  for (std::size_t i = 0; i < 100; i += 10) EXPECT_NEAR(slow.wave[i * 10], u.wave[i * 9], 1e-12);
  EXPECT_THROW(speed_perturb(u, 1.2, 10), ConfigError);
}

TEST(Features, ShapeAndNormalization) {
  const Utterance u = tone(16000);
  const Tensor f = compute_features(u.wave);
  EXPECT_EQ(f.shape(), (Shape{99, 80}));
  const Tensor raw = log_mel(u.wave);
  for (std::size_t i = 0; i < f.numel(); i += 37) EXPECT_NEAR(f[i], (raw[i] - kFeatureMean) * kFeatureScale, 1e-12);
}

TEST(Tokens, StringRoundTrip) {
  EXPECT_EQ(tokens_to_string({1, 2, 26}), "abz");
  EXPECT_EQ(tokens_from_string("abz"), (std::vector<int>{1, 2, 26}));
  EXPECT_THROW(tokens_to_string({0}), IndexError);
}

TEST(CorpusIo, RoundTrip) {
  const testing::TempDir dir("confsv-corpus");
  const Corpus a = synth_corpus(2, 2, 8);
  write_corpus(dir.path(), a);
  const Corpus b = read_corpus(dir.path());
  ASSERT_EQ(b.utts.size(), a.utts.size());
  EXPECT_EQ(b.num_speakers, 2u);
  for (std::size_t i = 0; i < a.utts.size(); ++i) {
    EXPECT_EQ(b.utts[i].id, a.utts[i].id);
    EXPECT_EQ(b.utts[i].speaker, a.utts[i].speaker);
    EXPECT_EQ(b.utts[i].tokens, a.utts[i].tokens);
    ASSERT_EQ(b.utts[i].spans.size(), a.utts[i].spans.size());
    for (std::size_t s = 0; s < a.utts[i].spans.size(); ++s) {
      EXPECT_EQ(b.utts[i].spans[s].begin, a.utts[i].spans[s].begin);
      EXPECT_EQ(b.utts[i].spans[s].end, a.utts[i].spans[s].end);
    }
    ASSERT_EQ(b.utts[i].wave.size(), a.utts[i].wave.size());
    for (std::size_t n = 0; n < a.utts[i].wave.size(); n += 101)
      EXPECT_NEAR(b.utts[i].wave[n], a.utts[i].wave[n], 1.0 / 32767);
  }
  const testing::TempDir again("confsv-corpus");
  write_corpus(again.path(), a);
  EXPECT_EQ(testing::read_file(again.file("manifest.txt")), testing::read_file(dir.file("manifest.txt")));
  EXPECT_THROW(read_corpus(dir.file("missing")), DataError);
}

}  // namespace
}  // namespace confsv
