// core/include/confsv/adaptation.h

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

#ifndef CONFSV_ADAPTATION_H_
#define CONFSV_ADAPTATION_H_

#include <memory>
#include <string>
#include <vector>

#include "confsv/conformer.h"
#include "confsv/heads.h"
#include "confsv/losses.h"

namespace confsv {

inline constexpr std::size_t kAdaptorWidth = 128;

enum class AdaptVariant { kV1, kV2, kV3 };
std::string variant_name(AdaptVariant v);
AdaptVariant parse_variant(const std::string& s);

struct AdaptationConfig {
  AdaptVariant variant = AdaptVariant::kV2;
  std::size_t layers = 12;       // L: backbone layers tapped
  std::size_t light_layers = 0;  // K: trainable lightweight Conformer layers
  BlockConfig light{176, 4, 704, 31, 0.1, 0.1};

  // Throws ConfigError for L = 0, L beyond the backbone, or V3 with K = 0.
  void validate(const EncoderConfig& backbone) const;
  // MFA width: 128*L + light.dim*K (V2/V3) or d*L + light.dim*K (V1).
  std::size_t mfa_width(const EncoderConfig& backbone) const;
};

// Linear(d,128) -> LN(128) -> ReLU -> Linear(128,128).
class LayerAdaptor : public Module {
 public:
  explicit LayerAdaptor(std::size_t in_dim, std::size_t width = kAdaptorWidth);
  Var forward(const Var& h) const;

 private:
  std::size_t in_dim_;
  Linear in_;
  LayerNorm norm_;
  Linear out_;
};

// Trainable add-on reading the first L block outputs of a frozen encoder.
// The encoder is borrowed, always run in inference mode without gradient
// recording, and is not part of this module's parameters.
//   V1: taps feed MFA directly.
//   V2: each tap passes through its own LayerAdaptor.
//   V3: as V2, and the K lightweight layers read Linear(d*L, 176) of the
//       concatenated taps instead of layer L.
// For V1/V2 the lightweight layers read tap L, through Linear(d, 176) when
// d differs from the lightweight width. With K = 0 the V3 wiring is
// identical to V2.
class SpeakerAdaptation : public Module {
 public:
  SpeakerAdaptation(ConformerEncoder& backbone, const AdaptationConfig& cfg,
                    std::size_t num_speakers);

  struct Output {
    Var embedding;
    std::vector<Var> taps;  // backbone outputs h_1..h_L
  };
  Output forward(const Var& features, const ForwardCtx& ctx);
  Var embed(const Var& features, const ForwardCtx& ctx) { return forward(features, ctx).embedding; }

  const AdaptationConfig& config() const { return cfg_; }
  ConformerEncoder& backbone() { return *backbone_; }
  SpeakerHead& head() { return head_; }
  AamSoftmax& classifier() { return classifier_; }
  // Adaptors, alignment map, lightweight layers and head; no classifier.
  std::size_t num_adaptation_params();

 private:
  ConformerEncoder* backbone_;
  AdaptationConfig cfg_;
  std::vector<std::unique_ptr<LayerAdaptor>> adaptors_;
  std::unique_ptr<Linear> align_;
  std::vector<std::unique_ptr<ConformerBlock>> light_;
  SpeakerHead head_;
  AamSoftmax classifier_;
};

// Validates cfg against the backbone, freezes backbone parameters and
// returns the module.
std::unique_ptr<SpeakerAdaptation> build_adaptation(ConformerEncoder& backbone,
                                                    const AdaptationConfig& cfg,
                                                    std::size_t num_speakers);

struct ProbeOptions {
  std::size_t hidden = 128;
  std::size_t iterations = 300;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
};

// Training accuracy of Linear -> Linear -> average pool -> Linear classifier
// fitted on one layer's outputs (each [T_i, d]) with full-batch Adam.
double linear_probe(const std::vector<Tensor>& layer_outputs,
                    const std::vector<std::size_t>& labels, const ProbeOptions& opts = {});

struct TrainingPhase {
  std::size_t first_epoch;  // inclusive
  std::size_t end_epoch;    // exclusive
  bool encoder_frozen;
};

// Phase 1: encoder frozen for frozen_epochs (pooling and head update);
// phase 2: everything updates. Empty phases are omitted.
std::vector<TrainingPhase> freeze_schedule(std::size_t total_epochs, int frozen_epochs);

}  // namespace confsv

#endif  // CONFSV_ADAPTATION_H_
