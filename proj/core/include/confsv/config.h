// core/include/confsv/config.h

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

#ifndef CONFSV_CONFIG_H_
#define CONFSV_CONFIG_H_

#include <cstdint>
#include <optional>
#include <string>

#include "confsv/adaptation.h"
#include "confsv/conformer.h"

namespace confsv {

enum class Strategy { kScratch, kPretrainedInit, kDistill, kAdapt };
std::string strategy_name(Strategy s);
Strategy parse_strategy(const std::string& s);  // scratch|pretrained-init|distill|adapt

struct OptimConfig {
  double lr = 1e-3;
  double weight_decay = 1e-7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 5;
  std::size_t warmup_epochs = 1;
  std::size_t batch_size = 8;
  double grad_clip = 0.0;  // 0 disables
};

struct LossConfig {
  double scale = 32.0;
  double margin = 0.2;
  double alpha = 1.0;  // distillation weight
};

struct LmftConfig {
  bool enabled = false;
  double margin = 0.5;
  double crop_seconds = 6.0;
  std::size_t epochs = 1;
  double lr = 1e-4;
};

struct DataConfig {
  std::string corpus;             // corpus directory
  double crop_seconds = 2.0;
  double augment_prob = 0.6;
  bool speed_perturb = true;
  std::size_t heldout_per_speaker = 10;  // utterances per speaker kept out of training
};

struct AsrConfig {
  std::size_t epochs = 5;
  double lr = 1e-3;
  double crop_seconds = 2.0;
};

struct TransferConfig {
  int frozen_epochs = 2;
  std::string init;     // ASR checkpoint for pretrained-init
  std::string teacher;  // ASR checkpoint for distill, backbone for adapt
};

struct ScoringConfig {
  std::size_t cohort_size = 300;
  std::size_t top_k = 70;
  std::size_t trials_per_class = 0;  // 0 uses every held-out pair
};

struct ProbeConfig {
  std::size_t hidden = 128;
  std::size_t iterations = 300;
  double lr = 0.01;
  std::size_t utts_per_speaker = 0;  // 0 uses all
};

struct RunConfig {
  std::string name = "run";
  std::optional<std::uint64_t> seed;  // mandatory before use
  Strategy strategy = Strategy::kScratch;
  std::string encoder_preset = "small";
  EncoderConfig encoder = EncoderConfig::small();
  AdaptationConfig adaptation;
  OptimConfig optim;
  LossConfig loss;
  LmftConfig lmft;
  DataConfig data;
  AsrConfig asr;
  TransferConfig transfer;
  ScoringConfig scoring;
  ProbeConfig probe;
  std::size_t threads = 1;

  // Seed presence, value ranges and strategy-specific fields.
  void validate() const;
  std::uint64_t require_seed() const;
};

// INI text with sections [experiment], [encoder], [adaptation], [optim],
// [loss], [lmft], [data], [asr], [transfer], [scoring], [probe]. Unknown
// sections or keys are errors. Encoder fields override the preset.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_ini(const RunConfig& cfg);

}  // namespace confsv

#endif  // CONFSV_CONFIG_H_
