// core/include/confsv/audio.h

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

#ifndef CONFSV_AUDIO_H_
#define CONFSV_AUDIO_H_

#include <string>
#include <vector>

#include "confsv/tensor.h"

namespace confsv {

inline constexpr int kSampleRate = 16000;

// 16-bit PCM mono WAV. Samples are clipped to [-1, 1] on write.
void write_wav(const std::string& path, const std::vector<double>& samples,
               int sample_rate = kSampleRate);
// Accepts 16-bit PCM mono only; throws DataError otherwise.
std::vector<double> read_wav(const std::string& path, int* sample_rate = nullptr);

struct MelOptions {
  int sample_rate = kSampleRate;
  std::size_t win_length = 320;  // 20 ms Hamming window
  std::size_t hop_length = 160;  // 10 ms shift
  std::size_t n_fft = 512;
  std::size_t n_mels = 80;
  double f_min = 0.0;
  double f_max = 8000.0;
  double log_floor = 1e-10;
};

// Slaney mel scale: linear below 1 kHz, logarithmic above.
double hz_to_mel(double hz);
double mel_to_hz(double mel);
// Triangular filters with Slaney area normalization: [n_mels, n_fft/2 + 1].
Tensor mel_filterbank(const MelOptions& opts = {});
// floor((n - win)/hop) + 1; throws DataError when n < win.
std::size_t num_frames(std::size_t n_samples, const MelOptions& opts = {});
// log(max(mel energy, floor)) per frame: [T, n_mels].
Tensor log_mel(const std::vector<double>& wave, const MelOptions& opts = {});

// Full linear convolution (length |a| + |b| - 1) computed with an FFT.
std::vector<double> fft_convolve(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace confsv

#endif  // CONFSV_AUDIO_H_
