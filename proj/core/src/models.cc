// core/src/models.cc

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

#include "confsv/models.h"

#include "confsv/error.h"

namespace confsv {

AsrModel::AsrModel(const EncoderConfig& cfg, std::size_t vocab)
    : vocab_(vocab), encoder_(cfg), decoder_(cfg.dim, vocab + 1) {
  if (vocab == 0) throw ConfigError("asr model: vocabulary must be non-empty");
  add_child("encoder", &encoder_);
  add_child("decoder", &decoder_);
}

Var AsrModel::forward(const Var& features, const ForwardCtx& ctx) {
  return decoder_.forward(encoder_.forward(features, ctx).back());
}

SpeakerModel::SpeakerModel(const EncoderConfig& cfg, const SpeakerModelOptions& opts)
    : encoder_(cfg),
      head_(cfg.layers * cfg.dim, cfg.bn_momentum),
      classifier_(opts.num_speakers, kEmbeddingDim) {
  add_child("encoder", &encoder_);
  add_child("head", &head_);
  add_child("classifier", &classifier_);
  if (opts.asr_vocab > 0) {
    if (opts.rate_match) {
      rate_match_ = std::make_unique<RateMatchConv>(cfg.dim);
      add_child("rate_match", rate_match_.get());
    }
    decoder_ = std::make_unique<Linear>(cfg.dim, opts.asr_vocab + 1);
    add_child("decoder", decoder_.get());
  } else if (opts.rate_match) {
    throw ConfigError("rate matching requires an ASR decoder");
  }
}

SpeakerModel::Output SpeakerModel::forward(const Var& features, const ForwardCtx& ctx,
                                           bool with_asr) {
  Output out;
  out.taps = run_encoder(features, ctx);
  out.embedding = head_.forward(out.taps, ctx);
  if (with_asr) {
    if (!decoder_) throw ConfigError("speaker model has no ASR decoder");
    Var frames = out.taps.back();
    if (rate_match_) frames = rate_match_->forward(frames);
    out.asr_logits = decoder_->forward(frames);
  }
  return out;
}

Var SpeakerModel::embed(const Var& features, const ForwardCtx& ctx) {
  return head_.forward(run_encoder(features, ctx), ctx);
}

std::vector<Var> SpeakerModel::run_encoder(const Var& features, const ForwardCtx& ctx) {
  if (!encoder_frozen_) return encoder_.forward(features, ctx);
  NoGradGuard no_grad;
  return encoder_.forward(features, ForwardCtx{});
}

void SpeakerModel::set_encoder_frozen(bool frozen) {
  encoder_frozen_ = frozen;
  encoder_.set_trainable(!frozen);
}

std::size_t SpeakerModel::num_inference_params() {
  return encoder_.num_params() + head_.num_params();
}

}  // namespace confsv
