// core/include/confsv/training.h

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

#ifndef CONFSV_TRAINING_H_
#define CONFSV_TRAINING_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "confsv/adaptation.h"
#include "confsv/config.h"
#include "confsv/datapipe.h"
#include "confsv/models.h"
#include "confsv/scoring.h"

namespace confsv {

struct EpochRecord {
  std::size_t epoch = 0;
  std::string phase;  // train, frozen, lmft, asr, adapt
  double loss = 0.0;  // mean batch loss
  double lr = 0.0;    // learning rate of the last step
  std::size_t steps = 0;
};

// "epoch,phase,loss,lr,steps" with fixed formatting.
void write_loss_csv(const std::string& path, const std::vector<EpochRecord>& log);

using UttList = std::vector<const Utterance*>;

struct CorpusSplit {
  UttList train;
  UttList heldout;
};
// The last n utterances of each speaker (corpus order) are held out.
CorpusSplit split_corpus(const Corpus& corpus, std::size_t heldout_per_speaker);

// Shuffled index batches for one epoch; the last batch may be short.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch);

struct ItemOptions {
  double crop_seconds = 2.0;
  double augment_prob = 0.6;
  bool speed_perturb = false;
  std::size_t num_speakers = 0;
};

struct TrainItem {
  Tensor features;  // [T, 80]
  std::size_t label = 0;
  std::vector<int> tokens;
};

// Speed perturbation (factor 1.0, 0.9 or 1.1 with equal odds), crop,
// augmentation, features. Deterministic in rng.
TrainItem prepare_item(const Utterance& utt, const ItemOptions& opts, Rng& rng);

// Items for one batch, each drawn from item_rng(seed, epoch, index). Runs
// on up to `threads` workers with identical results.
std::vector<TrainItem> prepare_batch(const UttList& utts, const std::vector<std::size_t>& indices,
                                     const ItemOptions& opts, std::uint64_t seed, std::size_t epoch,
                                     std::size_t threads = 1);
// Stacks equal-length features into [B, T, 80].
Tensor stack_features(const std::vector<TrainItem>& items);

// Speaker classes seen by the classifier: S, or 3S with speed perturbation.
std::size_t training_classes(std::size_t num_speakers, const DataConfig& data);

// Speaker training for the scratch, pretrained-init and distill strategies.
// Pretrained-init starts with the freeze schedule; a teacher adds the
// frame-level distillation term (the model must carry an ASR decoder).
std::vector<EpochRecord> train_speaker_model(SpeakerModel& model, const UttList& train,
                                             std::size_t num_speakers, const RunConfig& cfg,
                                             AsrModel* teacher = nullptr);

// CTC training of the toy ASR teacher on cropped utterances.
std::vector<EpochRecord> pretrain_asr(AsrModel& model, const UttList& train, const RunConfig& cfg);

// Trains the adaptation module; its backbone stays frozen.
std::vector<EpochRecord> train_adaptation(SpeakerAdaptation& module, const UttList& train,
                                          std::size_t num_speakers, const RunConfig& cfg);

using EmbedFn = std::function<Var(const Var& features)>;

// Whole-utterance embeddings in inference mode.
EmbeddingStore extract_embeddings(const UttList& utts, const EmbedFn& embed);
QualityTable quality_table(const UttList& utts);

// All pairs among utts (target when the speakers match). With per_class > 0
// a seeded subset of at most that many trials per class.
std::vector<Trial> make_trials(const UttList& utts, std::size_t per_class, std::uint64_t seed);

struct Metrics {
  double eer = 0.0;  // percent
  double min_dcf = 0.0;
};
Metrics compute_metrics(const std::vector<ScoredTrial>& scored, ScoreKind kind);

struct EvalOptions {
  bool snorm = false;
  bool qmf = false;
  std::size_t top_k = 70;
};

struct EvalReport {
  std::size_t targets = 0;
  std::size_t nontargets = 0;
  Metrics raw;
  Metrics snorm;       // valid when options.snorm
  Metrics calibrated;  // valid when options.qmf
  std::vector<ScoredTrial> scored;
};

// Scores eval trials; s-norm uses the cohort ids and QMF is fitted on
// qmf_trials (scored the same way) before being applied to the eval trials.
EvalReport evaluate(const std::vector<Trial>& trials, const EmbeddingStore& store,
                    const QualityTable& quality, const std::vector<std::string>& cohort_ids,
                    const std::vector<Trial>& qmf_trials, const EvalOptions& opts);

// "metric,value" rows.
void write_metrics_csv(const std::string& path, const EvalReport& report, const EvalOptions& opts);

// Per-layer probe accuracy of a frozen encoder on whole utterances.
std::vector<double> probe_encoder(ConformerEncoder& encoder, const UttList& utts,
                                  const ProbeOptions& opts);
// "layer,accuracy" rows, layers numbered from 1.
void write_probe_csv(const std::string& path, const std::vector<double>& accuracies);

}  // namespace confsv

#endif  // CONFSV_TRAINING_H_
