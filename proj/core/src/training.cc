// core/src/training.cc

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

#include "confsv/training.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>

#include "confsv/error.h"
#include "confsv/losses.h"
#include "confsv/optim.h"

namespace confsv {

namespace {

void check_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericError(what + " is not finite");
}

AdamWOptions adamw_options(const OptimConfig& o, double lr) {
  AdamWOptions a;
  a.lr = lr;
  a.beta1 = o.beta1;
  a.beta2 = o.beta2;
  a.eps = o.eps;
  a.weight_decay = o.weight_decay;
  return a;
}

std::size_t num_steps(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

Rng step_rng(std::uint64_t seed, std::size_t epoch, std::size_t step) {
  return Rng(derive_seed(derive_seed(seed, "step"), epoch * 1000003ull + step));
}

// Drops trailing tokens until the sequence fits in `frames` CTC frames.
std::vector<int> feasible_target(std::vector<int> tokens, std::size_t frames) {
  while (!tokens.empty() && ctc_min_frames(tokens) > frames) tokens.pop_back();
  return tokens;
}

// One pass over the shuffled training set. batch_loss builds the loss graph
// for a batch; lr_at maps the global step to a learning rate.
template <typename BatchLoss, typename LrAt>
EpochRecord run_epoch(AdamW& opt, const std::vector<Var>& params, const UttList& train,
                      const ItemOptions& items, const RunConfig& cfg, std::size_t epoch,
                      std::size_t& global_step, const std::string& phase, BatchLoss&& batch_loss,
                      LrAt&& lr_at) {
  const std::uint64_t seed = cfg.require_seed();
  EpochRecord rec;
  rec.epoch = epoch;
  rec.phase = phase;
  double sum = 0.0;
  const auto batches = epoch_batches(train.size(), cfg.optim.batch_size, seed, epoch);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const std::vector<TrainItem> batch = prepare_batch(train, batches[b], items, seed, epoch, cfg.threads);
    Rng rng = step_rng(seed, epoch, b);
    opt.zero_grad();
    const Var loss = batch_loss(batch, rng);
    const double value = loss.value().item();
    check_finite(value, phase + " loss at epoch " + std::to_string(epoch));
    backward(loss);
    if (cfg.optim.grad_clip > 0.0) check_finite(clip_grad_norm(params, cfg.optim.grad_clip), "gradient norm");
    rec.lr = lr_at(global_step);
    opt.step(rec.lr);
    ++global_step;
    sum += value;
  }
  rec.steps = batches.size();
  rec.loss = rec.steps ? sum / static_cast<double>(rec.steps) : 0.0;
  return rec;
}

std::vector<std::size_t> labels_of(const std::vector<TrainItem>& batch) {
  std::vector<std::size_t> out;
  for (const auto& it : batch) out.push_back(it.label);
  return out;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

void write_loss_csv(const std::string& path, const std::vector<EpochRecord>& log) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write " + path);
  f << "epoch,phase,loss,lr,steps\n";
  for (const auto& r : log)
    f << r.epoch << ',' << r.phase << ',' << fmt("%.12e", r.loss) << ',' << fmt("%.12e", r.lr) << ','
      << r.steps << '\n';
  if (!f) throw DataError("write failed for " + path);
}

CorpusSplit split_corpus(const Corpus& corpus, std::size_t heldout_per_speaker) {
  std::map<std::size_t, std::vector<const Utterance*>> by_speaker;
  for (const Utterance& u : corpus.utts) by_speaker[u.speaker].push_back(&u);
  CorpusSplit split;
  for (auto& [spk, list] : by_speaker) {
    if (list.size() <= heldout_per_speaker) {
      throw DataError("split: speaker " + std::to_string(spk) + " has only " + std::to_string(list.size()) +
                      " utterances");
    }
    const std::size_t cut = list.size() - heldout_per_speaker;
    split.train.insert(split.train.end(), list.begin(), list.begin() + static_cast<std::ptrdiff_t>(cut));
    split.heldout.insert(split.heldout.end(), list.begin() + static_cast<std::ptrdiff_t>(cut), list.end());
  }
  return split;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(derive_seed(seed, "order"), epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  return out;
}

TrainItem prepare_item(const Utterance& utt, const ItemOptions& opts, Rng& rng) {
  static constexpr double kFactors[3] = {1.0, 0.9, 1.1};
  const double factor = opts.speed_perturb ? kFactors[rng.below(3)] : 1.0;
  Utterance u = factor == 1.0 ? utt : speed_perturb(utt, factor, opts.num_speakers);
  u = crop(u, opts.crop_seconds, rng);
  if (opts.augment_prob > 0.0) u = augment_onthefly(u, opts.augment_prob, rng).utt;
  TrainItem item;
  item.features = compute_features(u.wave);
  item.label = u.speaker;
  item.tokens = std::move(u.tokens);
  return item;
}

std::vector<TrainItem> prepare_batch(const UttList& utts, const std::vector<std::size_t>& indices,
                                     const ItemOptions& opts, std::uint64_t seed, std::size_t epoch,
                                     std::size_t threads) {
  std::vector<TrainItem> out(indices.size());
  auto work = [&](std::size_t k) {
    Rng rng = item_rng(seed, epoch, indices[k]);
    out[k] = prepare_item(*utts.at(indices[k]), opts, rng);
  };
  if (threads <= 1 || indices.size() < 2) {
    for (std::size_t k = 0; k < indices.size(); ++k) work(k);
    return out;
  }
  const std::size_t workers = std::min(threads, indices.size());
  std::vector<std::future<void>> jobs;
  for (std::size_t w = 0; w < workers; ++w) {
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t k = w; k < indices.size(); k += workers) work(k);
    }));
  }
  for (auto& j : jobs) j.get();
  return out;
}

Tensor stack_features(const std::vector<TrainItem>& items) {
  if (items.empty()) throw DataError("empty batch");
  const std::size_t T = items[0].features.dim(0), F = items[0].features.dim(1);
  Tensor out({items.size(), T, F});
  auto dst = out.data();
  for (std::size_t b = 0; b < items.size(); ++b) {
    if (items[b].features.dim(0) != T) throw DimensionError("batch items differ in length");
    auto src = items[b].features.data();
    std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(b * T * F));
  }
  return out;
}

std::size_t training_classes(std::size_t num_speakers, const DataConfig& data) {
  return data.speed_perturb ? 3 * num_speakers : num_speakers;
}

std::vector<EpochRecord> train_speaker_model(SpeakerModel& model, const UttList& train, std::size_t num_speakers,
                                             const RunConfig& cfg, AsrModel* teacher) {
  cfg.require_seed();
  if (train.empty()) throw DataError("no training utterances");
  if (teacher) {
    if (!model.decoder()) throw ConfigError("distillation needs a student with an ASR decoder");
    teacher->set_trainable(false);
  }
  const std::size_t classes = training_classes(num_speakers, cfg.data);
  if (model.classifier().num_classes() != classes) {
    throw ConfigError("classifier has " + std::to_string(model.classifier().num_classes()) +
                      " classes, data provides " + std::to_string(classes));
  }
  const std::vector<Var> params = model.parameters();
  AdamW opt(params, adamw_options(cfg.optim, cfg.optim.lr));
  const std::size_t spe = num_steps(train.size(), cfg.optim.batch_size);
  const CosineWarmup sched(cfg.optim.lr, cfg.optim.warmup_epochs * spe, cfg.optim.epochs * spe);

  ItemOptions items{cfg.data.crop_seconds, cfg.data.augment_prob, cfg.data.speed_perturb, num_speakers};
  double margin = cfg.loss.margin;
  auto batch_loss = [&](const std::vector<TrainItem>& batch, Rng& rng) {
    const Var x = constant(stack_features(batch));
    ForwardCtx ctx{true, &rng};
    const auto out = model.forward(x, ctx, teacher != nullptr);
    Var loss = model.classifier().loss(out.embedding, labels_of(batch), cfg.loss.scale, margin);
    if (teacher) {
      Tensor target;
      {
        NoGradGuard no_grad;
        target = teacher->forward(x, ForwardCtx{}).value();
      }
      loss = combined_loss(loss, distill_kl_loss(out.asr_logits, target), cfg.loss.alpha);
    }
    return loss;
  };

  std::vector<EpochRecord> log;
  std::vector<TrainingPhase> phases{{0, cfg.optim.epochs, false}};
  if (cfg.strategy == Strategy::kPretrainedInit) phases = freeze_schedule(cfg.optim.epochs, cfg.transfer.frozen_epochs);
  std::size_t step = 0;
  for (const TrainingPhase& ph : phases) {
    model.set_encoder_frozen(ph.encoder_frozen);
    for (std::size_t e = ph.first_epoch; e < ph.end_epoch; ++e) {
      log.push_back(run_epoch(opt, params, train, items, cfg, e, step, ph.encoder_frozen ? "frozen" : "train",
                              batch_loss, [&](std::size_t s) { return sched.lr(s); }));
    }
  }
  model.set_encoder_frozen(false);
  if (cfg.lmft.enabled) {
    margin = cfg.lmft.margin;
    items.crop_seconds = cfg.lmft.crop_seconds;
    for (std::size_t e = cfg.optim.epochs; e < cfg.optim.epochs + cfg.lmft.epochs; ++e) {
      log.push_back(run_epoch(opt, params, train, items, cfg, e, step, "lmft", batch_loss,
                              [&](std::size_t) { return cfg.lmft.lr; }));
    }
  }
  return log;
}

std::vector<EpochRecord> pretrain_asr(AsrModel& model, const UttList& train, const RunConfig& cfg) {
  cfg.require_seed();
  if (train.empty()) throw DataError("no training utterances");
  if (cfg.asr.crop_seconds <= 0.0) throw ConfigError("asr crop must be positive");
  const std::vector<Var> params = model.parameters();
  AdamW opt(params, adamw_options(cfg.optim, cfg.asr.lr));
  const std::size_t spe = num_steps(train.size(), cfg.optim.batch_size);
  const CosineWarmup sched(cfg.asr.lr, cfg.optim.warmup_epochs * spe, cfg.asr.epochs * spe);
  const ItemOptions items{cfg.asr.crop_seconds, 0.0, false, 0};
  auto batch_loss = [&](const std::vector<TrainItem>& batch, Rng& rng) {
    const Var x = constant(stack_features(batch));
    const Var logits = model.forward(x, ForwardCtx{true, &rng});
    std::vector<std::vector<int>> targets;
    for (const auto& it : batch) targets.push_back(feasible_target(it.tokens, logits.dim(1)));
    return ctc_loss_batch(logits, targets);
  };
  std::vector<EpochRecord> log;
  std::size_t step = 0;
  for (std::size_t e = 0; e < cfg.asr.epochs; ++e) {
    log.push_back(run_epoch(opt, params, train, items, cfg, e, step, "asr", batch_loss,
                            [&](std::size_t s) { return sched.lr(s); }));
  }
  return log;
}

std::vector<EpochRecord> train_adaptation(SpeakerAdaptation& module, const UttList& train, std::size_t num_speakers,
                                          const RunConfig& cfg) {
  cfg.require_seed();
  if (train.empty()) throw DataError("no training utterances");
  const std::size_t classes = training_classes(num_speakers, cfg.data);
  if (module.classifier().num_classes() != classes) {
    throw ConfigError("classifier has " + std::to_string(module.classifier().num_classes()) +
                      " classes, data provides " + std::to_string(classes));
  }
  const std::vector<Var> params = module.parameters();
  AdamW opt(params, adamw_options(cfg.optim, cfg.optim.lr));
  const std::size_t spe = num_steps(train.size(), cfg.optim.batch_size);
  const CosineWarmup sched(cfg.optim.lr, cfg.optim.warmup_epochs * spe, cfg.optim.epochs * spe);
  const ItemOptions items{cfg.data.crop_seconds, cfg.data.augment_prob, cfg.data.speed_perturb, num_speakers};
  auto batch_loss = [&](const std::vector<TrainItem>& batch, Rng& rng) {
    const Var x = constant(stack_features(batch));
    const Var emb = module.embed(x, ForwardCtx{true, &rng});
    return module.classifier().loss(emb, labels_of(batch), cfg.loss.scale, cfg.loss.margin);
  };
  std::vector<EpochRecord> log;
  std::size_t step = 0;
  for (std::size_t e = 0; e < cfg.optim.epochs; ++e) {
    log.push_back(run_epoch(opt, params, train, items, cfg, e, step, "adapt", batch_loss,
                            [&](std::size_t s) { return sched.lr(s); }));
  }
  return log;
}

EmbeddingStore extract_embeddings(const UttList& utts, const EmbedFn& embed) {
  NoGradGuard no_grad;
  EmbeddingStore store;
  for (const Utterance* u : utts) {
    Tensor f = compute_features(u->wave);
    const std::size_t T = f.dim(0), F = f.dim(1);
    const Var e = embed(constant(f.reshaped({1, T, F})));
    std::vector<float> v(e.numel());
    auto src = e.value().data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      check_finite(src[i], "embedding of " + u->id);
      v[i] = static_cast<float>(src[i]);
    }
    store.add(u->id, std::move(v));
  }
  return store;
}

QualityTable quality_table(const UttList& utts) {
  QualityTable t;
  for (const Utterance* u : utts) t[u->id] = {u->duration(), estimate_snr_db(u->wave)};
  return t;
}

std::vector<Trial> make_trials(const UttList& utts, std::size_t per_class, std::uint64_t seed) {
  std::vector<Trial> targets, nontargets;
  for (std::size_t i = 0; i < utts.size(); ++i)
    for (std::size_t j = i + 1; j < utts.size(); ++j) {
      const bool same = utts[i]->speaker == utts[j]->speaker;
      (same ? targets : nontargets).push_back({same, utts[i]->id, utts[j]->id});
    }
  if (per_class > 0) {
    Rng rng(derive_seed(seed, "trials"));
    for (auto* list : {&targets, &nontargets}) {
      for (std::size_t i = list->size(); i > 1; --i) std::swap((*list)[i - 1], (*list)[rng.below(i)]);
      if (list->size() > per_class) list->resize(per_class);
    }
  }
  std::vector<Trial> out;
  out.reserve(targets.size() + nontargets.size());
  std::size_t a = 0, b = 0;
  // Interleave so a truncated file still holds both classes.
  while (a < targets.size() || b < nontargets.size()) {
    if (a < targets.size()) out.push_back(targets[a++]);
    const std::size_t ratio = targets.empty() ? nontargets.size() : nontargets.size() / targets.size() + 1;
    for (std::size_t k = 0; k < ratio && b < nontargets.size(); ++k) out.push_back(nontargets[b++]);
  }
  return out;
}

Metrics compute_metrics(const std::vector<ScoredTrial>& scored, ScoreKind kind) {
  std::vector<double> scores;
  std::vector<bool> labels;
  for (const auto& s : scored) {
    const double v = kind == ScoreKind::kRaw ? s.raw : kind == ScoreKind::kSnorm ? s.snorm : s.calibrated;
    check_finite(v, "score");
    scores.push_back(v);
    labels.push_back(s.trial.target);
  }
  return {eer(scores, labels), min_dcf(scores, labels)};
}

EvalReport evaluate(const std::vector<Trial>& trials, const EmbeddingStore& store, const QualityTable& quality,
                    const std::vector<std::string>& cohort_ids, const std::vector<Trial>& qmf_trials,
                    const EvalOptions& opts) {
  EvalReport r;
  for (const Trial& t : trials) (t.target ? r.targets : r.nontargets)++;
  const std::vector<std::string> none;
  const auto& cohort = opts.snorm ? cohort_ids : none;
  if (opts.snorm && cohort_ids.empty()) throw ConfigError("s-norm needs a cohort");
  r.scored = score_trials(trials, store, cohort, opts.top_k);
  r.raw = compute_metrics(r.scored, ScoreKind::kRaw);
  if (opts.snorm) r.snorm = compute_metrics(r.scored, ScoreKind::kSnorm);
  if (opts.qmf) {
    const auto fit_scored = score_trials(qmf_trials, store, cohort, opts.top_k);
    std::vector<QmfTrial> fit;
    for (const auto& s : fit_scored)
      fit.push_back({opts.snorm ? s.snorm : s.raw, trial_quality(s.trial, store, quality), s.trial.target});
    const QmfModel model = qmf_fit(fit);
    for (auto& s : r.scored)
      s.calibrated = model.apply(opts.snorm ? s.snorm : s.raw, trial_quality(s.trial, store, quality));
    r.calibrated = compute_metrics(r.scored, ScoreKind::kCalibrated);
  }
  return r;
}

void write_metrics_csv(const std::string& path, const EvalReport& r, const EvalOptions& opts) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write " + path);
  f << "metric,value\n";
  f << "targets," << r.targets << "\nnontargets," << r.nontargets << '\n';
  f << "eer_raw," << fmt("%.6f", r.raw.eer) << "\nmindcf_raw," << fmt("%.6f", r.raw.min_dcf) << '\n';
  if (opts.snorm) f << "eer_snorm," << fmt("%.6f", r.snorm.eer) << "\nmindcf_snorm," << fmt("%.6f", r.snorm.min_dcf) << '\n';
  if (opts.qmf) {
    f << "eer_qmf," << fmt("%.6f", r.calibrated.eer) << "\nmindcf_qmf," << fmt("%.6f", r.calibrated.min_dcf)
      << '\n';
  }
  if (!f) throw DataError("write failed for " + path);
}

std::vector<double> probe_encoder(ConformerEncoder& encoder, const UttList& utts, const ProbeOptions& opts) {
  if (utts.empty()) throw DataError("probe: no utterances");
  std::map<std::size_t, std::size_t> remap;
  std::vector<std::size_t> labels;
  for (const Utterance* u : utts) labels.push_back(remap.emplace(u->speaker, remap.size()).first->second);
  const std::size_t L = encoder.config().layers;
  std::vector<std::vector<Tensor>> per_layer(L);
  {
    NoGradGuard no_grad;
    for (const Utterance* u : utts) {
      Tensor f = compute_features(u->wave);
      const std::size_t T = f.dim(0), F = f.dim(1);
      const auto taps = encoder.forward(constant(f.reshaped({1, T, F})), ForwardCtx{});
      for (std::size_t l = 0; l < L; ++l) {
        const Tensor& h = taps[l].value();
        per_layer[l].push_back(h.reshaped({h.dim(1), h.dim(2)}));
      }
    }
  }
  std::vector<double> acc;
  for (std::size_t l = 0; l < L; ++l) {
    ProbeOptions o = opts;
    o.seed = derive_seed(opts.seed, l);
    acc.push_back(linear_probe(per_layer[l], labels, o));
  }
  return acc;
}

void write_probe_csv(const std::string& path, const std::vector<double>& accuracies) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write " + path);
  f << "layer,accuracy\n";
  for (std::size_t l = 0; l < accuracies.size(); ++l) f << l + 1 << ',' << fmt("%.6f", accuracies[l]) << '\n';
  if (!f) throw DataError("write failed for " + path);
}

}  // namespace confsv
