// core/include/confsv/datapipe.h

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

#ifndef CONFSV_DATAPIPE_H_
#define CONFSV_DATAPIPE_H_

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "confsv/audio.h"
#include "confsv/random.h"
#include "confsv/tensor.h"

namespace confsv {

struct TokenSpan {
  int token;          // 1..V
  std::size_t begin;  // first sample
  std::size_t end;    // one past the last sample
};

struct Utterance {
  std::string id;
  std::vector<double> wave;
  std::size_t speaker = 0;
  std::vector<int> tokens;
  std::vector<TokenSpan> spans;
  double gain = 1.0;  // product of renormalization factors applied so far

  double duration() const { return static_cast<double>(wave.size()) / kSampleRate; }
};

struct Formant {
  double freq;
  double bandwidth;
  double gain;
};

struct SpeakerProfile {
  double f0 = 120.0;             // mean fundamental (Hz)
  double f0_spread = 0.05;       // relative intonation depth
  double tract_scale = 1.0;      // multiplies token formant frequencies
  double tilt = -1.2;            // harmonic amplitude ~ k^tilt
  double breath = 0.01;          // additive noise level
  std::vector<Formant> timbre;   // speaker resonances independent of token
  std::vector<double> token_offsets;  // per-token formant scale, vocab entries
};

struct SynthOptions {
  std::size_t vocab = 8;
  double min_duration = 1.5;  // seconds
  double max_duration = 3.0;
  double min_token = 0.08;
  double max_token = 0.20;
};

struct Corpus {
  std::vector<Utterance> utts;
  std::size_t num_speakers = 0;
  std::size_t vocab = 0;
};

SpeakerProfile make_speaker_profile(std::uint64_t seed, std::size_t vocab);
// Token vowel formants shared by all speakers.
std::vector<Formant> token_formants(int token);
// Harmonic source through token and speaker resonances, peak 0.8.
Utterance synth_utterance(const SpeakerProfile& profile, const std::vector<int>& tokens,
                          const std::vector<double>& token_seconds, Rng& rng);
// Deterministic given (n_speakers, utts_per_speaker, seed, opts).
Corpus synth_corpus(std::size_t n_speakers, std::size_t utts_per_speaker, std::uint64_t seed,
                    const SynthOptions& opts = {});

// Independent stream for one item of one epoch.
Rng item_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index);

// Resamples by linear interpolation to round(N / factor) samples. Speaker
// label becomes speaker + num_speakers * k with k = 0, 1, 2 for factors
// 1.0, 0.9, 1.1.
Utterance speed_perturb(const Utterance& utt, double factor, std::size_t num_speakers);

enum class AugmentKind { kNone, kAmbient, kMusic, kBabble, kReverb };
std::string augment_name(AugmentKind kind);

struct NoiseSignal {
  std::vector<double> wave;
  std::size_t sources = 1;  // babble speakers mixed
};
// Procedural noise of n samples: colored ambient noise, tonal music, or
// babble of 3 to 8 synthetic talkers.
NoiseSignal make_noise(AugmentKind kind, std::size_t n, Rng& rng);
// Exponentially decaying noise tail after a unit direct path.
std::vector<double> make_rir(Rng& rng);

inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();
// Mixes noise (tiled or cut to length) at the target SNR. SNR +inf returns
// the input. Rescales to peak 1 when the mix would clip.
Utterance add_noise(const Utterance& utt, const std::vector<double>& noise, double snr_db);
// Convolution truncated to the input length, scaled to the input peak.
Utterance reverb(const Utterance& utt, const std::vector<double>& rir);

struct AugmentResult {
  Utterance utt;
  AugmentKind kind = AugmentKind::kNone;
  double snr_db = kNoNoise;
};
// With probability p applies one of ambient/music/babble/reverb chosen
// uniformly; noise SNR is uniform in [0, 20] dB.
AugmentResult augment_onthefly(const Utterance& utt, double p, Rng& rng);

// Random contiguous crop when longer, loop padding when shorter. Token spans
// follow the samples; a token is kept when its midpoint lies in the window.
Utterance crop(const Utterance& utt, double seconds, Rng& rng);

// Fixed affine normalization of log-mel features.
inline constexpr double kFeatureMean = -4.0;
inline constexpr double kFeatureScale = 0.375;
// Normalized log-mel [T, 80].
Tensor compute_features(const std::vector<double>& wave);

std::string tokens_to_string(const std::vector<int>& tokens);
std::vector<int> tokens_from_string(const std::string& s);

// Writes <dir>/wav/<id>.wav, <dir>/manifest.txt ("relpath speaker tokens
// duration") and <dir>/alignments.txt (token spans). The manifest is written
// to a temporary name and renamed last.
void write_corpus(const std::string& dir, const Corpus& corpus);
Corpus read_corpus(const std::string& dir);

}  // namespace confsv

#endif  // CONFSV_DATAPIPE_H_
