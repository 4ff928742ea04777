// core/src/audio.cc

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

#include "confsv/audio.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <mutex>

#include "confsv/error.h"

namespace confsv {

namespace {

// FFTW planning is not thread-safe.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(const std::string& buf, std::size_t pos) {
  if (pos + sizeof(T) > buf.size()) throw DataError("wav: truncated header");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

void write_wav(const std::string& path, const std::vector<double>& samples, int sample_rate) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("wav: cannot open " + path + " for writing");
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  f.write("RIFF", 4);
  put<std::uint32_t>(f, 36 + data_bytes);
  f.write("WAVEfmt ", 8);
  put<std::uint32_t>(f, 16);
  put<std::uint16_t>(f, 1);  // PCM
  put<std::uint16_t>(f, 1);  // mono
  put<std::uint32_t>(f, static_cast<std::uint32_t>(sample_rate));
  put<std::uint32_t>(f, static_cast<std::uint32_t>(sample_rate) * 2);
  put<std::uint16_t>(f, 2);
  put<std::uint16_t>(f, 16);
  f.write("data", 4);
  put<std::uint32_t>(f, data_bytes);
  for (double s : samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    put<std::int16_t>(f, static_cast<std::int16_t>(std::lround(c * 32767.0)));
  }
  if (!f) throw DataError("wav: write failed for " + path);
}

std::vector<double> read_wav(const std::string& path, int* sample_rate) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("wav: cannot open " + path);
  const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || buf.compare(0, 4, "RIFF") != 0 || buf.compare(8, 4, "WAVE") != 0) {
    throw DataError("wav: not a RIFF/WAVE file: " + path);
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  int rate = 0;
  while (pos + 8 <= buf.size()) {
    const std::string id = buf.substr(pos, 4);
    const auto size = get<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      const auto format = get<std::uint16_t>(buf, body);
      const auto channels = get<std::uint16_t>(buf, body + 2);
      rate = static_cast<int>(get<std::uint32_t>(buf, body + 4));
      const auto bits = get<std::uint16_t>(buf, body + 14);
      if (format != 1 || channels != 1 || bits != 16) {
        throw DataError("wav: only 16-bit PCM mono is supported: " + path);
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw DataError("wav: data chunk before fmt chunk: " + path);
      const std::size_t n = std::min<std::size_t>(size, buf.size() - body) / 2;
      std::vector<double> out(n);
      for (std::size_t i = 0; i < n; ++i)
        out[i] = static_cast<double>(get<std::int16_t>(buf, body + 2 * i)) / 32767.0;
      if (sample_rate) *sample_rate = rate;
      return out;
    }
    pos = body + size + (size & 1);
  }
  throw DataError("wav: no data chunk in " + path);
}

double hz_to_mel(double hz) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return hz < min_log_hz ? hz / f_sp : min_log_mel + std::log(hz / min_log_hz) / logstep;
}

double mel_to_hz(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return mel < min_log_mel ? mel * f_sp : min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

Tensor mel_filterbank(const MelOptions& opts) {
  const std::size_t bins = opts.n_fft / 2 + 1;
  Tensor fb({opts.n_mels, bins});
  const double lo = hz_to_mel(opts.f_min), hi = hz_to_mel(opts.f_max);
  std::vector<double> edges(opts.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(opts.n_mels + 1));
  for (std::size_t m = 0; m < opts.n_mels; ++m) {
    const double l = edges[m], c = edges[m + 1], r = edges[m + 2];
    const double norm = 2.0 / (r - l);
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * opts.sample_rate / static_cast<double>(opts.n_fft);
      const double w = std::max(0.0, std::min((f - l) / (c - l), (r - f) / (r - c)));
      fb.at(m, k) = w * norm;
    }
  }
  return fb;
}

std::size_t num_frames(std::size_t n_samples, const MelOptions& opts) {
  if (n_samples < opts.win_length) {
    throw DataError("log_mel: input too short (" + std::to_string(n_samples) +
                    " samples, need " + std::to_string(opts.win_length) + ")");
  }
  return (n_samples - opts.win_length) / opts.hop_length + 1;
}

Tensor log_mel(const std::vector<double>& wave, const MelOptions& opts) {
  const std::size_t T = num_frames(wave.size(), opts);
  const std::size_t N = opts.n_fft, bins = N / 2 + 1;
  if (opts.win_length > N) throw ConfigError("log_mel: window longer than FFT");
  const Tensor fb = mel_filterbank(opts);
  std::vector<double> window(opts.win_length);
  for (std::size_t n = 0; n < opts.win_length; ++n)
    window[n] = 0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(n) /
                                       static_cast<double>(opts.win_length - 1));

  double* in = fftw_alloc_real(N);
  fftw_complex* out = fftw_alloc_complex(bins);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(plan_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(N), in, out, FFTW_ESTIMATE);
  }
  // Nonzero support of each filter.
  std::vector<std::pair<std::size_t, std::size_t>> support(opts.n_mels, {0, 0});
  for (std::size_t m = 0; m < opts.n_mels; ++m) {
    std::size_t lo = bins, hi = 0;
    for (std::size_t k = 0; k < bins; ++k)
      if (fb.at(m, k) != 0.0) {
        lo = std::min(lo, k);
        hi = k + 1;
      }
    if (lo < hi) support[m] = {lo, hi};
  }
  Tensor feats({T, opts.n_mels});
  std::vector<double> power(bins);
  for (std::size_t t = 0; t < T; ++t) {
    std::fill(in, in + N, 0.0);
    const double* frame = wave.data() + t * opts.hop_length;
    for (std::size_t n = 0; n < opts.win_length; ++n) in[n] = frame[n] * window[n];
    fftw_execute(plan);
    for (std::size_t k = 0; k < bins; ++k) power[k] = out[k][0] * out[k][0] + out[k][1] * out[k][1];
    for (std::size_t m = 0; m < opts.n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = support[m].first; k < support[m].second; ++k) e += fb.at(m, k) * power[k];
      feats.at(t, m) = std::log(std::max(e, opts.log_floor));
    }
  }
  {
    std::lock_guard<std::mutex> lock(plan_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return feats;
}

std::vector<double> fft_convolve(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t L = a.size() + b.size() - 1;
  const std::size_t N = next_pow2(L), bins = N / 2 + 1;
  double* buf = fftw_alloc_real(N);
  fftw_complex* fa = fftw_alloc_complex(bins);
  fftw_complex* fb = fftw_alloc_complex(bins);
  fftw_plan fwd_a, fwd_b, inv;
  {
    std::lock_guard<std::mutex> lock(plan_mutex());
    fwd_a = fftw_plan_dft_r2c_1d(static_cast<int>(N), buf, fa, FFTW_ESTIMATE);
    fwd_b = fftw_plan_dft_r2c_1d(static_cast<int>(N), buf, fb, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(N), fa, buf, FFTW_ESTIMATE);
  }
  std::fill(buf, buf + N, 0.0);
  std::copy(a.begin(), a.end(), buf);
  fftw_execute(fwd_a);
  std::fill(buf, buf + N, 0.0);
  std::copy(b.begin(), b.end(), buf);
  fftw_execute(fwd_b);
  for (std::size_t k = 0; k < bins; ++k) {
    const double re = fa[k][0] * fb[k][0] - fa[k][1] * fb[k][1];
    const double im = fa[k][0] * fb[k][1] + fa[k][1] * fb[k][0];
    fa[k][0] = re;
    fa[k][1] = im;
  }
  fftw_execute(inv);
  std::vector<double> out(buf, buf + L);
  for (double& v : out) v /= static_cast<double>(N);
  {
    std::lock_guard<std::mutex> lock(plan_mutex());
    fftw_destroy_plan(fwd_a);
    fftw_destroy_plan(fwd_b);
    fftw_destroy_plan(inv);
  }
  fftw_free(buf);
  fftw_free(fa);
  fftw_free(fb);
  return out;
}

}  // namespace confsv
