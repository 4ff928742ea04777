// core/src/datapipe.cc

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

#include "confsv/datapipe.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "confsv/error.h"

namespace confsv {

namespace fs = std::filesystem;

namespace {

constexpr double kPeak = 0.8;
constexpr double kMaxHarmonicHz = 7800.0;
constexpr std::size_t kCrossfade = 160;

double peak(const std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p = std::max(p, std::abs(v));
  return p;
}

double power(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return s / static_cast<double>(x.size());
}

double resonance(double f, const Formant& r) {
  const double u = (f - r.freq) / r.bandwidth;
  return r.gain / (1.0 + u * u);
}

}  // namespace

std::vector<Formant> token_formants(int token) {
  Rng rng(derive_seed(0x70C3E5ull, static_cast<std::uint64_t>(token)));
  return {
      {rng.uniform(300.0, 900.0), rng.uniform(60.0, 120.0), 1.0},
      {rng.uniform(900.0, 2400.0), rng.uniform(80.0, 160.0), rng.uniform(0.5, 0.9)},
      {rng.uniform(2400.0, 3300.0), rng.uniform(120.0, 240.0), rng.uniform(0.2, 0.5)},
  };
}

SpeakerProfile make_speaker_profile(std::uint64_t seed, std::size_t vocab) {
  Rng rng(seed);
  SpeakerProfile p;
  p.f0 = std::exp(rng.uniform(std::log(85.0), std::log(260.0)));
  p.f0_spread = rng.uniform(0.02, 0.08);
  p.tract_scale = rng.uniform(0.82, 1.22);
  p.tilt = rng.uniform(-1.6, -0.7);
  p.breath = rng.uniform(0.003, 0.02);
  const std::size_t n_timbre = 2;
  for (std::size_t i = 0; i < n_timbre; ++i)
    p.timbre.push_back({rng.uniform(2500.0, 5500.0), rng.uniform(150.0, 450.0), rng.uniform(0.3, 1.0)});
  p.token_offsets.resize(vocab + 1);
  for (double& o : p.token_offsets) o = rng.uniform(0.95, 1.05);
  return p;
}

Utterance synth_utterance(const SpeakerProfile& profile, const std::vector<int>& tokens,
                          const std::vector<double>& token_seconds, Rng& rng) {
  if (tokens.empty() || tokens.size() != token_seconds.size()) {
    throw ConfigError("synth: need one duration per token and at least one token");
  }
  Utterance u;
  u.tokens = tokens;
  std::size_t total = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto n = static_cast<std::size_t>(std::lround(token_seconds[i] * kSampleRate));
    u.spans.push_back({tokens[i], total, total + n});
    total += n;
  }
  u.wave.assign(total, 0.0);
  const double f0_base = profile.f0 * rng.uniform(0.95, 1.05);
  const double into_rate = rng.uniform(0.3, 1.2);
  const double into_phase = rng.uniform(0.0, 2.0 * M_PI);
  const std::size_t K = static_cast<std::size_t>(kMaxHarmonicHz / (f0_base * (1.0 + profile.f0_spread)));

  // Harmonic amplitudes per token, evaluated at the token's nominal f0.
  auto amplitudes = [&](int token) {
    std::vector<Formant> fm = token_formants(token);
    const double off = profile.token_offsets.at(static_cast<std::size_t>(token) % profile.token_offsets.size());
    for (Formant& f : fm) f.freq *= profile.tract_scale * off;
    std::vector<double> a(K + 1, 0.0);
    for (std::size_t k = 1; k <= K; ++k) {
      const double f = static_cast<double>(k) * f0_base;
      double r = 0.02;
      for (const Formant& x : fm) r += resonance(f, x);
      for (const Formant& x : profile.timbre) r += resonance(f, x);
      a[k] = std::pow(static_cast<double>(k), profile.tilt) * r;
    }
    return a;
  };

  double theta = 0.0;
  std::vector<double> prev_amp;
  for (const TokenSpan& span : u.spans) {
    const std::vector<double> amp = amplitudes(span.token);
    if (prev_amp.empty()) prev_amp = amp;
    const std::size_t len = span.end - span.begin;
    std::vector<double> cur(K + 1);
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t n = span.begin + i;
      const double t = static_cast<double>(n) / kSampleRate;
      const double f0 = f0_base * (1.0 + profile.f0_spread * std::sin(2.0 * M_PI * into_rate * t + into_phase));
      theta += 2.0 * M_PI * f0 / kSampleRate;
      if (theta > 2.0 * M_PI) theta -= 2.0 * M_PI;
      const double w = i < kCrossfade ? static_cast<double>(i) / kCrossfade : 1.0;
      // sin(k*theta) by the Chebyshev recurrence s_{k+1} = 2 cos(theta) s_k - s_{k-1}.
      const double c2 = 2.0 * std::cos(theta);
      double s_prev = 0.0, s = std::sin(theta), acc = 0.0;
      for (std::size_t k = 1; k <= K; ++k) {
        const double a = w < 1.0 ? prev_amp[k] + w * (amp[k] - prev_amp[k]) : amp[k];
        acc += a * s;
        const double s_next = c2 * s - s_prev;
        s_prev = s;
        s = s_next;
      }
      const double u_pos = (static_cast<double>(i) + 0.5) / static_cast<double>(len);
      const double env = 0.6 + 0.4 * std::sin(M_PI * u_pos);
      u.wave[n] = env * acc;
    }
    prev_amp = amp;
  }
  const double sig_peak = peak(u.wave);
  if (sig_peak > 0.0)
    for (double& v : u.wave) v /= sig_peak;
  for (double& v : u.wave) v += profile.breath * rng.normal();
  const double p = peak(u.wave);
  if (p > 0.0)
    for (double& v : u.wave) v *= kPeak / p;
  return u;
}

Corpus synth_corpus(std::size_t n_speakers, std::size_t utts_per_speaker, std::uint64_t seed,
                    const SynthOptions& opts) {
  if (n_speakers < 2) throw ConfigError("synth_corpus: need at least 2 speakers");
  if (utts_per_speaker == 0) throw ConfigError("synth_corpus: need at least 1 utterance per speaker");
  if (opts.vocab == 0 || opts.min_token <= 0 || opts.max_token < opts.min_token ||
      opts.max_duration < opts.min_duration || opts.min_duration < 0.5) {
    throw ConfigError("synth_corpus: invalid synthesis options");
  }
  Corpus c;
  c.num_speakers = n_speakers;
  c.vocab = opts.vocab;
  for (std::size_t s = 0; s < n_speakers; ++s) {
    const SpeakerProfile prof = make_speaker_profile(derive_seed(seed, "speaker" + std::to_string(s)), opts.vocab);
    for (std::size_t i = 0; i < utts_per_speaker; ++i) {
      Rng rng(derive_seed(seed, "utt" + std::to_string(s) + "/" + std::to_string(i)));
      const double target = rng.uniform(opts.min_duration, opts.max_duration);
      std::vector<int> tokens;
      std::vector<double> secs;
      double total = 0.0;
      while (total < target) {
        tokens.push_back(1 + static_cast<int>(rng.below(opts.vocab)));
        secs.push_back(rng.uniform(opts.min_token, opts.max_token));
        total += secs.back();
      }
      Utterance u = synth_utterance(prof, tokens, secs, rng);
      u.speaker = s;
      char id[64];
      std::snprintf(id, sizeof(id), "spk%03zu/utt%04zu", s, i);
      u.id = id;
      c.utts.push_back(std::move(u));
    }
  }
  return c;
}

Rng item_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  return Rng(derive_seed(derive_seed(seed, epoch + 0x9E37ull), index));
}

Utterance speed_perturb(const Utterance& utt, double factor, std::size_t num_speakers) {
  std::size_t k;
  if (factor == 1.0) {
    return utt;
  } else if (std::abs(factor - 0.9) < 1e-12) {
    k = 1;
  } else if (std::abs(factor - 1.1) < 1e-12) {
    k = 2;
  } else {
    throw ConfigError("speed_perturb: factor must be 0.9, 1.0 or 1.1");
  }
  const std::size_t N = utt.wave.size();
  const auto M = static_cast<std::size_t>(std::lround(static_cast<double>(N) / factor));
  Utterance out = utt;
  out.wave.assign(M, 0.0);
  for (std::size_t i = 0; i < M; ++i) {
    const double pos = static_cast<double>(i) * factor;
    const auto j = static_cast<std::size_t>(pos);
    if (j + 1 < N) {
      const double f = pos - static_cast<double>(j);
      out.wave[i] = (1.0 - f) * utt.wave[j] + f * utt.wave[j + 1];
    } else {
      out.wave[i] = utt.wave[std::min(j, N - 1)];
    }
  }
  for (TokenSpan& s : out.spans) {
    s.begin = std::min(M, static_cast<std::size_t>(std::lround(static_cast<double>(s.begin) / factor)));
    s.end = std::min(M, static_cast<std::size_t>(std::lround(static_cast<double>(s.end) / factor)));
  }
  out.speaker = utt.speaker + num_speakers * k;
  out.id = utt.id + (k == 1 ? "-sp0.9" : "-sp1.1");
  return out;
}

std::string augment_name(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::kNone:
      return "none";
    case AugmentKind::kAmbient:
      return "ambient";
    case AugmentKind::kMusic:
      return "music";
    case AugmentKind::kBabble:
      return "babble";
    case AugmentKind::kReverb:
      return "reverb";
  }
  return "?";
}

NoiseSignal make_noise(AugmentKind kind, std::size_t n, Rng& rng) {
  NoiseSignal out;
  out.wave.assign(n, 0.0);
  switch (kind) {
    case AugmentKind::kAmbient: {
      // White noise through a one-pole low-pass of random colour.
      const double a = rng.uniform(0.0, 0.95);
      double y = 0.0;
      for (double& v : out.wave) {
        y = a * y + (1.0 - a) * rng.normal();
        v = y;
      }
      break;
    }
    case AugmentKind::kMusic: {
      const std::size_t voices = static_cast<std::size_t>(rng.range(2, 4));
      for (std::size_t vi = 0; vi < voices; ++vi) {
        std::size_t pos = 0;
        double phase = 0.0;
        while (pos < n) {
          const auto len = static_cast<std::size_t>(rng.uniform(0.2, 0.5) * kSampleRate);
          const double f = 110.0 * std::pow(2.0, static_cast<double>(rng.range(0, 36)) / 12.0);
          for (std::size_t i = 0; i < len && pos < n; ++i, ++pos) {
            phase += 2.0 * M_PI * f / kSampleRate;
            const double env = std::exp(-3.0 * static_cast<double>(i) / static_cast<double>(len));
            double s = 0.0;
            for (int h = 1; h <= 4; ++h) s += std::sin(h * phase) / h;
            out.wave[pos] += env * s;
          }
        }
      }
      break;
    }
    case AugmentKind::kBabble: {
      out.sources = static_cast<std::size_t>(rng.range(3, 8));
      for (std::size_t s = 0; s < out.sources; ++s) {
        const SpeakerProfile prof = make_speaker_profile(rng.next_u64(), 8);
        std::vector<int> tokens;
        std::vector<double> secs;
        double total = 0.0;
        while (total * kSampleRate < static_cast<double>(n) + 1.0) {
          tokens.push_back(1 + static_cast<int>(rng.below(8)));
          secs.push_back(rng.uniform(0.08, 0.2));
          total += secs.back();
        }
        const Utterance talker = synth_utterance(prof, tokens, secs, rng);
        for (std::size_t i = 0; i < n; ++i) out.wave[i] += talker.wave[i % talker.wave.size()];
      }
      break;
    }
    default:
      throw ConfigError("make_noise: not a noise kind: " + augment_name(kind));
  }
  return out;
}

std::vector<double> make_rir(Rng& rng) {
  const double rt60 = rng.uniform(0.2, 0.8);
  const auto len = static_cast<std::size_t>(0.25 * kSampleRate);
  std::vector<double> h(len);
  h[0] = 1.0;
  const double decay = std::log(1000.0) / (rt60 * kSampleRate);  // -60 dB at rt60
  const auto pre_delay = static_cast<std::size_t>(rng.uniform(0.002, 0.01) * kSampleRate);
  for (std::size_t i = pre_delay; i < len; ++i)
    h[i] += 0.3 * rng.normal() * std::exp(-decay * static_cast<double>(i));
  return h;
}

Utterance add_noise(const Utterance& utt, const std::vector<double>& noise, double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return utt;
  const double pn_raw = power(noise);
  if (noise.empty() || pn_raw <= 0.0) throw DataError("add_noise: degenerate (zero-power) noise");
  const std::size_t N = utt.wave.size();
  std::vector<double> n(N);
  for (std::size_t i = 0; i < N; ++i) n[i] = noise[i % noise.size()];
  const double ps = power(utt.wave);
  const double pn = power(n);
  if (pn <= 0.0) throw DataError("add_noise: degenerate (zero-power) noise");
  const double k = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  Utterance out = utt;
  for (std::size_t i = 0; i < N; ++i) out.wave[i] = utt.wave[i] + k * n[i];
  const double p = peak(out.wave);
  if (p > 1.0) {
    for (double& v : out.wave) v /= p;
    out.gain *= 1.0 / p;
  }
  return out;
}

Utterance reverb(const Utterance& utt, const std::vector<double>& rir) {
  if (rir.empty()) throw ConfigError("reverb: empty impulse response");
  Utterance out = utt;
  if (utt.wave.empty()) return out;
  std::vector<double> y = fft_convolve(utt.wave, rir);
  y.resize(utt.wave.size());
  const double py = peak(y), px = peak(utt.wave);
  const double g = py > 0.0 ? px / py : 0.0;
  for (double& v : y) v *= g;
  out.wave = std::move(y);
  return out;
}

AugmentResult augment_onthefly(const Utterance& utt, double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) throw ConfigError("augment: probability must lie in [0, 1]");
  AugmentResult r;
  if (!(rng.uniform() < p)) {
    r.utt = utt;
    return r;
  }
  static constexpr AugmentKind kinds[] = {AugmentKind::kAmbient, AugmentKind::kMusic,
                                          AugmentKind::kBabble, AugmentKind::kReverb};
  r.kind = kinds[rng.below(4)];
  if (r.kind == AugmentKind::kReverb) {
    r.utt = reverb(utt, make_rir(rng));
  } else {
    r.snr_db = rng.uniform(0.0, 20.0);
    r.utt = add_noise(utt, make_noise(r.kind, utt.wave.size(), rng).wave, r.snr_db);
  }
  return r;
}

Utterance crop(const Utterance& utt, double seconds, Rng& rng) {
  if (seconds <= 0.0) throw ConfigError("crop: length must be positive");
  if (utt.wave.empty()) throw DataError("crop: empty utterance");
  const auto L = static_cast<std::size_t>(std::lround(seconds * kSampleRate));
  const std::size_t N = utt.wave.size();
  Utterance out = utt;
  out.wave.resize(L);
  out.spans.clear();
  out.tokens.clear();
  std::size_t start = 0;
  if (N > L) start = static_cast<std::size_t>(rng.below(N - L + 1));
  for (std::size_t i = 0; i < L; ++i) out.wave[i] = utt.wave[(start + i) % N];
  // Token spans of the source, repeated for each loop pass, shifted into the window.
  for (std::size_t pass = 0; pass * N < start + L; ++pass) {
    for (const TokenSpan& s : utt.spans) {
      const double mid = static_cast<double>(pass * N) + 0.5 * static_cast<double>(s.begin + s.end);
      if (mid < static_cast<double>(start) || mid >= static_cast<double>(start + L)) continue;
      const auto b = static_cast<std::ptrdiff_t>(pass * N + s.begin) - static_cast<std::ptrdiff_t>(start);
      const auto e = static_cast<std::ptrdiff_t>(pass * N + s.end) - static_cast<std::ptrdiff_t>(start);
      out.spans.push_back({s.token, static_cast<std::size_t>(std::max<std::ptrdiff_t>(b, 0)),
                           static_cast<std::size_t>(std::min<std::ptrdiff_t>(e, static_cast<std::ptrdiff_t>(L)))});
      out.tokens.push_back(s.token);
    }
  }
  return out;
}

Tensor compute_features(const std::vector<double>& wave) {
  Tensor f = log_mel(wave);
  for (double& v : f.storage()) v = (v - kFeatureMean) * kFeatureScale;
  return f;
}

std::string tokens_to_string(const std::vector<int>& tokens) {
  std::string s;
  for (int t : tokens) {
    if (t < 1 || t > 26) throw IndexError("token " + std::to_string(t) + " outside 1..26");
    s.push_back(static_cast<char>('a' + t - 1));
  }
  return s;
}

std::vector<int> tokens_from_string(const std::string& s) {
  std::vector<int> out;
  for (char c : s) {
    if (c < 'a' || c > 'z') throw DataError(std::string("bad token character '") + c + "'");
    out.push_back(c - 'a' + 1);
  }
  return out;
}

void write_corpus(const std::string& dir, const Corpus& corpus) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "wav", ec);
  if (ec) throw DataError("write_corpus: cannot create " + dir + ": " + ec.message());
  std::ostringstream manifest, align;
  manifest.precision(6);
  manifest << std::fixed;
  for (const Utterance& u : corpus.utts) {
    const std::string rel = "wav/" + u.id + ".wav";
    const fs::path path = fs::path(dir) / rel;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw DataError("write_corpus: cannot create " + path.parent_path().string());
    write_wav(path.string(), u.wave);
    manifest << rel << ' ' << u.speaker << ' ' << tokens_to_string(u.tokens) << ' '
             << u.duration() << '\n';
    align << rel;
    for (const TokenSpan& s : u.spans) align << ' ' << s.token << ':' << s.begin << ':' << s.end;
    align << '\n';
  }
  auto write_text = [&](const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::trunc);
    if (!f) throw DataError("write_corpus: cannot write " + p.string());
    f << text;
    if (!f) throw DataError("write_corpus: write failed for " + p.string());
  };
  write_text(fs::path(dir) / "alignments.txt", align.str());
  const fs::path tmp = fs::path(dir) / "manifest.txt.tmp";
  write_text(tmp, "# vocab " + std::to_string(corpus.vocab) + " speakers " +
                      std::to_string(corpus.num_speakers) + "\n" + manifest.str());
  fs::rename(tmp, fs::path(dir) / "manifest.txt", ec);
  if (ec) throw DataError("write_corpus: cannot finalize manifest: " + ec.message());
}

Corpus read_corpus(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "manifest.txt");
  if (!mf) throw DataError("read_corpus: no manifest.txt in " + dir);
  std::map<std::string, std::vector<TokenSpan>> spans;
  if (std::ifstream af(fs::path(dir) / "alignments.txt"); af) {
    for (std::string line; std::getline(af, line);) {
      std::istringstream ls(line);
      std::string rel, item;
      ls >> rel;
      while (ls >> item) {
        TokenSpan s{};
        char c1 = 0, c2 = 0;
        std::istringstream is(item);
        if (!(is >> s.token >> c1 >> s.begin >> c2 >> s.end) || c1 != ':' || c2 != ':') {
          throw DataError("read_corpus: bad alignment entry '" + item + "'");
        }
        spans[rel].push_back(s);
      }
    }
  }
  Corpus c;
  std::size_t max_spk = 0;
  int lineno = 0;
  for (std::string line; std::getline(mf, line);) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key;
      std::size_t val;
      while (hs >> key >> val) {
        if (key == "vocab") c.vocab = val;
        if (key == "speakers") c.num_speakers = val;
      }
      continue;
    }
    std::istringstream ls(line);
    std::string rel, toks;
    std::size_t spk;
    double dur;
    if (!(ls >> rel >> spk >> toks >> dur)) {
      throw ParseError("manifest line " + std::to_string(lineno) + ": expected 'path speaker tokens duration'", lineno);
    }
    Utterance u;
    u.id = rel;
    if (u.id.rfind("wav/", 0) == 0) u.id = u.id.substr(4);
    if (u.id.size() > 4 && u.id.substr(u.id.size() - 4) == ".wav") u.id.resize(u.id.size() - 4);
    u.wave = read_wav((fs::path(dir) / rel).string());
    u.speaker = spk;
    u.tokens = tokens_from_string(toks);
    auto it = spans.find(rel);
    if (it != spans.end()) u.spans = it->second;
    max_spk = std::max(max_spk, spk);
    for (int t : u.tokens) c.vocab = std::max(c.vocab, static_cast<std::size_t>(t));
    c.utts.push_back(std::move(u));
  }
  c.num_speakers = std::max(c.num_speakers, c.utts.empty() ? 0 : max_spk + 1);
  return c;
}

}  // namespace confsv
