// core/src/accounting.cc

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

#include "confsv/accounting.h"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "confsv/error.h"
#include "confsv/heads.h"

namespace confsv {

namespace {

constexpr std::size_t kWindow = 320;
constexpr std::size_t kHop = 160;
constexpr std::size_t kRate = 16000;

std::uint64_t layer_norm_params(std::size_t d) { return 2 * d; }
std::uint64_t batch_norm_params(std::size_t c) { return 2 * c; }
std::uint64_t conv2d_params(std::size_t in, std::size_t out, std::size_t k) { return in * out * k * k + out; }

std::uint64_t ffn_params(const BlockConfig& c) {
  return layer_norm_params(c.dim) + linear_params(c.dim, c.hidden) + linear_params(c.hidden, c.dim);
}
std::uint64_t mhsa_params(const BlockConfig& c) {
  return layer_norm_params(c.dim) + 4 * linear_params(c.dim, c.dim) + linear_params(c.dim, c.dim, false) +
         2 * c.dim;
}
std::uint64_t conv_module_params(const BlockConfig& c) {
  return layer_norm_params(c.dim) + linear_params(c.dim, 2 * c.dim) + c.dim * c.conv_kernel + c.dim +
         batch_norm_params(c.dim) + linear_params(c.dim, c.dim);
}

struct FrontEnd {
  std::uint64_t macs = 0;
  std::size_t frames = 0;
};

void add_block_params(CountReport& r, const BlockConfig& c, std::size_t n, const std::string& prefix) {
  r.add(prefix + ".ffn", n * 2 * ffn_params(c));
  r.add(prefix + ".mhsa", n * mhsa_params(c));
  r.add(prefix + ".conv", n * conv_module_params(c));
  r.add(prefix + ".norm", n * layer_norm_params(c.dim));
}

void add_head_params(CountReport& r, std::size_t D) {
  r.add("mfa", layer_norm_params(D));
  r.add("pooling", linear_params(3 * D, kPoolBottleneck) + batch_norm_params(kPoolBottleneck) +
                       linear_params(kPoolBottleneck, D));
  r.add("head", batch_norm_params(2 * D) + linear_params(2 * D, kEmbeddingDim));
}

// Per-block MACs over T frames.
struct BlockMacs {
  std::uint64_t ffn, mhsa, attention, conv;
};

BlockMacs block_macs(const BlockConfig& c, std::size_t T, MacsConvention conv) {
  const std::size_t d = c.dim;
  const bool dense = conv == MacsConvention::kDense;
  const std::size_t rows = dense ? T : 1;
  BlockMacs m{};
  m.ffn = 2 * (matmul_macs(rows, d, c.hidden) + matmul_macs(rows, c.hidden, d));
  const std::size_t pos_rows = dense ? 2 * T - 1 : 1;
  m.mhsa = 4 * matmul_macs(rows, d, d) + matmul_macs(pos_rows, d, d);
  if (dense) {
    // Content scores, positional scores and context, summed over heads.
    m.attention = matmul_macs(T, d, T) + matmul_macs(T, d, 2 * T - 1) + matmul_macs(T, T, d);
  }
  m.conv = matmul_macs(T, d, 2 * d) + T * d * c.conv_kernel + matmul_macs(T, d, d);
  return m;
}

void add_block_macs(CountReport& r, const BlockConfig& c, std::size_t T, std::size_t n,
                    MacsConvention conv, const std::string& prefix) {
  const BlockMacs m = block_macs(c, T, conv);
  r.add(prefix + ".ffn", n * m.ffn);
  r.add(prefix + ".mhsa", n * m.mhsa);
  if (conv == MacsConvention::kDense) r.add(prefix + ".attention", n * m.attention);
  r.add(prefix + ".conv", n * m.conv);
}

void add_head_macs(CountReport& r, std::size_t D, std::size_t T) {
  r.add("pooling", matmul_macs(T, 3 * D, kPoolBottleneck) + matmul_macs(T, kPoolBottleneck, D));
  r.add("head", matmul_macs(1, 2 * D, kEmbeddingDim));
}

FrontEnd subsampling_macs(const EncoderConfig& cfg, std::size_t T0, MacsConvention conv) {
  FrontEnd f;
  std::size_t T = T0, F = cfg.n_mels, in = 1;
  for (std::size_t r = cfg.subsample; r > 1; r /= 2) {
    T = conv_length(T, 3, 2, 1);
    F = conv_length(F, 3, 2, 1);
    f.macs += static_cast<std::uint64_t>(in) * cfg.dim * 9 * T * F;
    in = cfg.dim;
  }
  f.macs += matmul_macs(conv == MacsConvention::kDense ? T : 1, cfg.dim * F, cfg.dim);
  f.frames = T;
  return f;
}

std::string title_for(const EncoderConfig& c) {
  std::ostringstream s;
  s << "L=" << c.layers << " d=" << c.dim << " h=" << c.heads << " ffn=" << c.hidden << " rate=1/"
    << c.subsample;
  return s.str();
}

}  // namespace

void CountReport::add(const std::string& component, std::uint64_t value) {
  items.push_back({component, value});
  total += value;
}

std::uint64_t CountReport::get(const std::string& component) const {
  for (const auto& it : items)
    if (it.component == component) return it.value;
  return 0;
}

std::string CountReport::to_csv() const {
  std::ostringstream s;
  s << "component," << unit << '\n';
  for (const auto& it : items) s << it.component << ',' << it.value << '\n';
  s << "total," << total << '\n';
  return s.str();
}

std::string CountReport::to_text() const {
  std::ostringstream s;
  s << title << '\n';
  char buf[128];
  for (const auto& it : items) {
    std::snprintf(buf, sizeof(buf), "  %-22s %16llu  %6.2f%%\n", it.component.c_str(),
                  static_cast<unsigned long long>(it.value),
                  total ? 100.0 * static_cast<double>(it.value) / static_cast<double>(total) : 0.0);
    s << buf;
  }
  std::snprintf(buf, sizeof(buf), "  %-22s %16llu  (%.2fM %s)\n", "total", static_cast<unsigned long long>(total),
                static_cast<double>(total) / 1e6, unit.c_str());
  s << buf;
  return s.str();
}

CountScope parse_scope(const std::string& s) {
  if (s == "encoder") return CountScope::kEncoder;
  if (s == "encoder+decoder") return CountScope::kEncoderDecoder;
  if (s == "speaker") return CountScope::kSpeaker;
  throw ConfigError("unknown count scope '" + s + "' (encoder|encoder+decoder|speaker)");
}

MacsConvention parse_convention(const std::string& s) {
  if (s == "profiler") return MacsConvention::kProfiler;
  if (s == "dense") return MacsConvention::kDense;
  throw ConfigError("unknown MACs convention '" + s + "' (profiler|dense)");
}

std::uint64_t linear_params(std::size_t in, std::size_t out, bool bias) {
  return static_cast<std::uint64_t>(in) * out + (bias ? out : 0);
}

std::uint64_t matmul_macs(std::size_t m, std::size_t k, std::size_t n) {
  return static_cast<std::uint64_t>(m) * k * n;
}

std::size_t conv_length(std::size_t n, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ConfigError("conv_length: stride must be positive");
  if (n + 2 * padding < kernel) {
    throw ConfigError("conv_length: input " + std::to_string(n) + " shorter than kernel " +
                      std::to_string(kernel));
  }
  return (n + 2 * padding - kernel) / stride + 1;
}

std::size_t feature_frames_for(double seconds) {
  if (!(seconds > 0.0)) throw ConfigError("input length must be positive");
  const auto samples = static_cast<std::size_t>(std::llround(seconds * kRate));
  return conv_length(samples, kWindow, kHop, 0);
}

std::uint64_t block_params(const BlockConfig& cfg) {
  cfg.validate();
  return 2 * ffn_params(cfg) + mhsa_params(cfg) + conv_module_params(cfg) + layer_norm_params(cfg.dim);
}

std::uint64_t speaker_head_params(std::size_t D) {
  CountReport r;
  add_head_params(r, D);
  return r.total;
}

CountReport count_params(const EncoderConfig& cfg, CountScope scope, std::size_t vocab) {
  cfg.validate();
  CountReport r;
  r.title = "parameters " + title_for(cfg);
  r.unit = "params";
  std::uint64_t sub = 0;
  std::size_t in = 1, F = cfg.n_mels;
  for (std::size_t s = cfg.subsample; s > 1; s /= 2) {
    sub += conv2d_params(in, cfg.dim, 3);
    F = conv_length(F, 3, 2, 1);
    in = cfg.dim;
  }
  sub += linear_params(cfg.dim * F, cfg.dim);
  r.add("subsampling", sub);
  add_block_params(r, cfg.block(), cfg.layers, "blocks");
  if (scope == CountScope::kEncoderDecoder) {
    if (vocab == 0) throw ConfigError("decoder vocabulary must be positive");
    r.add("decoder", linear_params(cfg.dim, vocab + 1));
  }
  if (scope == CountScope::kSpeaker) add_head_params(r, cfg.layers * cfg.dim);
  return r;
}

CountReport count_adaptation_params(const AdaptationConfig& cfg, const EncoderConfig& backbone) {
  backbone.validate();
  cfg.validate(backbone);
  CountReport r;
  r.title = "adaptation " + variant_name(cfg.variant) + " L=" + std::to_string(cfg.layers) +
            " K=" + std::to_string(cfg.light_layers) + " on " + title_for(backbone);
  r.unit = "params";
  const std::size_t d = backbone.dim;
  if (cfg.variant != AdaptVariant::kV1) {
    r.add("adaptors", cfg.layers * (linear_params(d, kAdaptorWidth) + layer_norm_params(kAdaptorWidth) +
                                    linear_params(kAdaptorWidth, kAdaptorWidth)));
  }
  if (cfg.light_layers > 0) {
    if (cfg.variant == AdaptVariant::kV3) {
      r.add("align", linear_params(d * cfg.layers, cfg.light.dim));
    } else if (d != cfg.light.dim) {
      r.add("align", linear_params(d, cfg.light.dim));
    }
    add_block_params(r, cfg.light, cfg.light_layers, "light");
  }
  add_head_params(r, cfg.mfa_width(backbone));
  return r;
}

CountReport estimate_macs(const EncoderConfig& cfg, double input_seconds, MacsConvention convention,
                          bool include_head) {
  cfg.validate();
  CountReport r;
  char secs[32];
  std::snprintf(secs, sizeof(secs), "%g", input_seconds);
  r.title = std::string("MACs (") + (convention == MacsConvention::kDense ? "dense" : "profiler") + ", " + secs +
            " s) " + title_for(cfg);
  r.unit = "MACs";
  const FrontEnd f = subsampling_macs(cfg, feature_frames_for(input_seconds), convention);
  r.add("subsampling", f.macs);
  add_block_macs(r, cfg.block(), f.frames, cfg.layers, convention, "blocks");
  if (include_head) add_head_macs(r, cfg.layers * cfg.dim, f.frames);
  return r;
}

CountReport estimate_adaptation_macs(const AdaptationConfig& cfg, const EncoderConfig& backbone,
                                     double input_seconds, MacsConvention convention) {
  backbone.validate();
  cfg.validate(backbone);
  CountReport r;
  r.title = std::string("adaptation MACs (") + (convention == MacsConvention::kDense ? "dense" : "profiler") +
            ") " + variant_name(cfg.variant) + " L=" + std::to_string(cfg.layers) +
            " K=" + std::to_string(cfg.light_layers);
  r.unit = "MACs";
  const std::size_t T = backbone.subsampled_frames(feature_frames_for(input_seconds));
  const std::size_t d = backbone.dim;
  const std::size_t rows = convention == MacsConvention::kDense ? T : 1;
  if (cfg.variant != AdaptVariant::kV1) {
    r.add("adaptors", cfg.layers * (matmul_macs(rows, d, kAdaptorWidth) +
                                    matmul_macs(rows, kAdaptorWidth, kAdaptorWidth)));
  }
  if (cfg.light_layers > 0) {
    if (cfg.variant == AdaptVariant::kV3) {
      r.add("align", matmul_macs(rows, d * cfg.layers, cfg.light.dim));
    } else if (d != cfg.light.dim) {
      r.add("align", matmul_macs(rows, d, cfg.light.dim));
    }
    add_block_macs(r, cfg.light, T, cfg.light_layers, convention, "light");
  }
  add_head_macs(r, cfg.mfa_width(backbone), T);
  return r;
}

}  // namespace confsv
