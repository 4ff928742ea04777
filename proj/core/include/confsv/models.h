// core/include/confsv/models.h

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

#ifndef CONFSV_MODELS_H_
#define CONFSV_MODELS_H_

#include <memory>
#include <vector>

#include "confsv/conformer.h"
#include "confsv/heads.h"
#include "confsv/losses.h"

namespace confsv {

// Conformer encoder with a linear CTC decoder over V tokens plus blank.
class AsrModel : public Module {
 public:
  AsrModel(const EncoderConfig& cfg, std::size_t vocab);
  // features [B, T, n_mels] -> logits [B, T', V+1]
  Var forward(const Var& features, const ForwardCtx& ctx);
  ConformerEncoder& encoder() { return encoder_; }
  Linear& decoder() { return decoder_; }
  std::size_t vocab() const { return vocab_; }

 private:
  std::size_t vocab_;
  ConformerEncoder encoder_;
  Linear decoder_;
};

struct SpeakerModelOptions {
  std::size_t num_speakers = 2;
  // When > 0 the model carries a CTC decoder over this vocabulary, used as
  // the student side of frame-level distillation.
  std::size_t asr_vocab = 0;
  // Halve the frame rate before the decoder (student at rate 1/2, teacher at 1/4).
  bool rate_match = false;
};

// MFA-Conformer: encoder taps -> MFA -> ASP -> 256-d embedding, with an AAM
// classifier for training.
class SpeakerModel : public Module {
 public:
  SpeakerModel(const EncoderConfig& cfg, const SpeakerModelOptions& opts);

  struct Output {
    Var embedding;            // [B, 256]
    std::vector<Var> taps;    // L maps [B, T', d]
    Var asr_logits;           // [B, T'', V+1], when requested
  };
  Output forward(const Var& features, const ForwardCtx& ctx, bool with_asr = false);
  Var embed(const Var& features, const ForwardCtx& ctx);

  ConformerEncoder& encoder() { return encoder_; }
  SpeakerHead& head() { return head_; }
  AamSoftmax& classifier() { return classifier_; }
  Linear* decoder() { return decoder_.get(); }
  RateMatchConv* rate_match() { return rate_match_.get(); }
  // Encoder plus speaker head; excludes classifier and decoder.
  std::size_t num_inference_params();

  // A frozen encoder gets no gradients and runs in inference mode, so its
  // batch-norm statistics stay fixed as well.
  void set_encoder_frozen(bool frozen);
  bool encoder_frozen() const { return encoder_frozen_; }

 private:
  ConformerEncoder encoder_;
  SpeakerHead head_;
  AamSoftmax classifier_;
  std::unique_ptr<Linear> decoder_;
  std::unique_ptr<RateMatchConv> rate_match_;
  std::vector<Var> run_encoder(const Var& features, const ForwardCtx& ctx);

  bool encoder_frozen_ = false;
};

}  // namespace confsv

#endif  // CONFSV_MODELS_H_
