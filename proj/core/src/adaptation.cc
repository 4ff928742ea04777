// core/src/adaptation.cc

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

#include "confsv/adaptation.h"

#include <algorithm>
#include <set>

#include "confsv/error.h"
#include "confsv/optim.h"

namespace confsv {

std::string variant_name(AdaptVariant v) {
  switch (v) {
    case AdaptVariant::kV1:
      return "V1";
    case AdaptVariant::kV2:
      return "V2";
    case AdaptVariant::kV3:
      return "V3";
  }
  return "?";
}

AdaptVariant parse_variant(const std::string& s) {
  if (s == "V1" || s == "v1") return AdaptVariant::kV1;
  if (s == "V2" || s == "v2") return AdaptVariant::kV2;
  if (s == "V3" || s == "v3") return AdaptVariant::kV3;
  throw ConfigError("unknown adaptation variant: " + s);
}

void AdaptationConfig::validate(const EncoderConfig& backbone) const {
  if (layers == 0) throw ConfigError("adaptation: L must be >= 1");
  if (layers > backbone.layers) {
    throw ConfigError("adaptation: L=" + std::to_string(layers) + " exceeds backbone depth " +
                      std::to_string(backbone.layers));
  }
  if (variant == AdaptVariant::kV3 && light_layers == 0) {
    throw ConfigError("adaptation: V3 requires K >= 1");
  }
  if (light_layers > 0) light.validate();
}

std::size_t AdaptationConfig::mfa_width(const EncoderConfig& backbone) const {
  const std::size_t per_tap = variant == AdaptVariant::kV1 ? backbone.dim : kAdaptorWidth;
  return per_tap * layers + light.dim * light_layers;
}

LayerAdaptor::LayerAdaptor(std::size_t in_dim, std::size_t width)
    : in_dim_(in_dim), in_(in_dim, width), norm_(width), out_(width, width) {
  add_child("linear1", &in_);
  add_child("norm", &norm_);
  add_child("linear2", &out_);
}

Var LayerAdaptor::forward(const Var& h) const {
  if (h.shape().empty() || h.shape().back() != in_dim_) {
    throw DimensionError("adaptor: expected width " + std::to_string(in_dim_) + ", got " +
                         shape_str(h.shape()));
  }
  return out_.forward(relu(norm_.forward(in_.forward(h))));
}

SpeakerAdaptation::SpeakerAdaptation(ConformerEncoder& backbone, const AdaptationConfig& cfg,
                                     std::size_t num_speakers)
    : backbone_(&backbone),
      cfg_(cfg),
      head_(cfg.mfa_width(backbone.config()), cfg.light.bn_momentum),
      classifier_(num_speakers, kEmbeddingDim) {
  const EncoderConfig& bc = backbone.config();
  if (cfg.layers == 0 || cfg.layers > bc.layers) {
    throw ConfigError("adaptation: L=" + std::to_string(cfg.layers) + " outside 1.." +
                      std::to_string(bc.layers));
  }
  if (cfg.variant != AdaptVariant::kV1) {
    for (std::size_t i = 0; i < cfg.layers; ++i) {
      adaptors_.push_back(std::make_unique<LayerAdaptor>(bc.dim));
      add_child("adaptors." + std::to_string(i), adaptors_.back().get());
    }
  }
  if (cfg.light_layers > 0) {
    if (cfg.variant == AdaptVariant::kV3) {
      align_ = std::make_unique<Linear>(bc.dim * cfg.layers, cfg.light.dim);
    } else if (bc.dim != cfg.light.dim) {
      align_ = std::make_unique<Linear>(bc.dim, cfg.light.dim);
    }
    if (align_) add_child("align", align_.get());
    for (std::size_t k = 0; k < cfg.light_layers; ++k) {
      light_.push_back(std::make_unique<ConformerBlock>(cfg.light));
      add_child("light." + std::to_string(k), light_.back().get());
    }
  }
  add_child("head", &head_);
  add_child("classifier", &classifier_);
}

SpeakerAdaptation::Output SpeakerAdaptation::forward(const Var& features, const ForwardCtx& ctx) {
  Output out;
  {
    NoGradGuard no_grad;
    out.taps = backbone_->forward(features, ForwardCtx{}, cfg_.layers);
  }
  std::vector<Var> mfa_in;
  if (adaptors_.empty()) {
    mfa_in = out.taps;
  } else {
    for (std::size_t i = 0; i < adaptors_.size(); ++i) mfa_in.push_back(adaptors_[i]->forward(out.taps[i]));
  }
  if (!light_.empty()) {
    Var z = cfg_.variant == AdaptVariant::kV3 ? concat(out.taps, 2) : out.taps.back();
    if (align_) z = align_->forward(z);
    for (auto& block : light_) {
      z = block->forward(z, ctx);
      mfa_in.push_back(z);
    }
  }
  out.embedding = head_.forward(mfa_in, ctx);
  return out;
}

std::size_t SpeakerAdaptation::num_adaptation_params() {
  return num_params() - classifier_.num_params();
}

std::unique_ptr<SpeakerAdaptation> build_adaptation(ConformerEncoder& backbone,
                                                    const AdaptationConfig& cfg,
                                                    std::size_t num_speakers) {
  cfg.validate(backbone.config());
  backbone.set_trainable(false);
  return std::make_unique<SpeakerAdaptation>(backbone, cfg, num_speakers);
}

namespace {

class Probe : public Module {
 public:
  Probe(std::size_t in, std::size_t hidden, std::size_t classes)
      : fc1_(in, hidden), fc2_(hidden, hidden), cls_(hidden, classes) {
    add_child("fc1", &fc1_);
    add_child("fc2", &fc2_);
    add_child("classifier", &cls_);
  }
  // The two linear maps commute with averaging over frames, so they are
  // applied to the pooled features.
  Var forward(const Var& pooled) const { return cls_.forward(fc2_.forward(fc1_.forward(pooled))); }

 private:
  Linear fc1_, fc2_, cls_;
};

}  // namespace

double linear_probe(const std::vector<Tensor>& layer_outputs,
                    const std::vector<std::size_t>& labels, const ProbeOptions& opts) {
  if (layer_outputs.empty() || layer_outputs.size() != labels.size()) {
    throw DimensionError("probe: " + std::to_string(layer_outputs.size()) + " inputs for " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::set<std::size_t> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw DataError("probe: need at least two speakers");
  const std::size_t classes = *distinct.rbegin() + 1;
  const std::size_t N = labels.size();
  const std::size_t d = layer_outputs[0].shape().back();
  Tensor pooled({N, d});
  for (std::size_t n = 0; n < N; ++n) {
    const Tensor& h = layer_outputs[n];
    if (h.rank() != 2 || h.dim(1) != d || h.dim(0) == 0) {
      throw DimensionError("probe: utterance " + std::to_string(n) + " has shape " +
                           shape_str(h.shape()));
    }
    for (std::size_t t = 0; t < h.dim(0); ++t)
      for (std::size_t j = 0; j < d; ++j) pooled.at(n, j) += h.at(t, j);
    for (std::size_t j = 0; j < d; ++j) pooled.at(n, j) /= static_cast<double>(h.dim(0));
  }
  Probe probe(d, opts.hidden, classes);
  probe.initialize(opts.seed);
  AdamWOptions ao;
  ao.lr = opts.learning_rate;
  ao.weight_decay = 0.0;
  AdamW optim(probe.parameters(), ao);
  const Var x = constant(pooled);
  for (std::size_t it = 0; it < opts.iterations; ++it) {
    optim.zero_grad();
    backward(cross_entropy(probe.forward(x), labels));
    optim.step();
  }
  NoGradGuard no_grad;
  const Tensor logits = probe.forward(x).value();
  std::size_t correct = 0;
  for (std::size_t n = 0; n < N; ++n) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (logits.at(n, c) > logits.at(n, best)) best = c;
    if (best == labels[n]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(N);
}

std::vector<TrainingPhase> freeze_schedule(std::size_t total_epochs, int frozen_epochs) {
  if (frozen_epochs < 0) throw ConfigError("freeze schedule: frozen_epochs must be >= 0");
  const std::size_t f = std::min(total_epochs, static_cast<std::size_t>(frozen_epochs));
  std::vector<TrainingPhase> phases;
  if (f > 0) phases.push_back({0, f, true});
  if (f < total_epochs) phases.push_back({f, total_epochs, false});
  return phases;
}

}  // namespace confsv
