// core/include/confsv/accounting.h

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

#ifndef CONFSV_ACCOUNTING_H_
#define CONFSV_ACCOUNTING_H_

#include <cstdint>
#include <string>
#include <vector>

#include "confsv/adaptation.h"
#include "confsv/conformer.h"

namespace confsv {

struct CountItem {
  std::string component;
  std::uint64_t value = 0;
};

// Integer breakdown whose items always sum to total.
struct CountReport {
  std::string title;
  std::string unit;  // "params" or "MACs"
  std::vector<CountItem> items;
  std::uint64_t total = 0;

  void add(const std::string& component, std::uint64_t value);
  std::uint64_t get(const std::string& component) const;  // 0 when absent
  std::string to_csv() const;
  std::string to_text() const;
};

enum class CountScope {
  kEncoder,         // subsampling + blocks
  kEncoderDecoder,  // + CTC decoder
  kSpeaker,         // encoder + MFA + pooling + embedding head, no classifier
};
CountScope parse_scope(const std::string& s);  // encoder|encoder+decoder|speaker

enum class MacsConvention {
  // Linear maps counted once per layer, convolutions per output position,
  // attention score/context products excluded.
  kProfiler,
  // Every matmul and convolution counted per frame, attention included.
  kDense,
};
MacsConvention parse_convention(const std::string& s);  // profiler|dense

std::uint64_t linear_params(std::size_t in, std::size_t out, bool bias = true);
std::uint64_t matmul_macs(std::size_t m, std::size_t k, std::size_t n);
// floor((n + 2p - k)/s) + 1; ConfigError when the window does not fit.
std::size_t conv_length(std::size_t n, std::size_t kernel, std::size_t stride, std::size_t padding);
// Log-mel frames for a clip of the given length at 16 kHz.
std::size_t feature_frames_for(double seconds);

std::uint64_t block_params(const BlockConfig& cfg);
std::uint64_t speaker_head_params(std::size_t mfa_dim);

CountReport count_params(const EncoderConfig& cfg, CountScope scope = CountScope::kEncoder,
                         std::size_t vocab = 1024);
CountReport count_adaptation_params(const AdaptationConfig& cfg, const EncoderConfig& backbone);

CountReport estimate_macs(const EncoderConfig& cfg, double input_seconds = 5.0,
                          MacsConvention convention = MacsConvention::kProfiler,
                          bool include_head = true);
CountReport estimate_adaptation_macs(const AdaptationConfig& cfg, const EncoderConfig& backbone,
                                     double input_seconds = 5.0,
                                     MacsConvention convention = MacsConvention::kProfiler);

}  // namespace confsv

#endif  // CONFSV_ACCOUNTING_H_
