// tools/cli.cc

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

#include "cli.h"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <cstdio>
#include <ostream>
#include <algorithm>
#include <map>
#include <sstream>

#include "confsv/accounting.h"
#include "confsv/checkpoint.h"
#include "confsv/config.h"
#include "confsv/error.h"
#include "confsv/training.h"

namespace confsv::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string corpus;
  std::string teacher;
  std::string init;
  bool lmft = false;
};

void add_common(CLI::App* app, Common& c, bool needs_out = true) {
  app->add_option("--config", c.config, "INI run configuration");
  app->add_option("--seed", c.seed, "Seed (overrides the config)");
  auto* o = app->add_option("--out", c.out, "Run directory for outputs");
  if (needs_out) o->required();
  app->add_option("--corpus", c.corpus, "Corpus directory (overrides [data] corpus)");
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) cfg.seed = c.seed;
  if (!c.corpus.empty()) cfg.data.corpus = c.corpus;
  if (!c.teacher.empty()) cfg.transfer.teacher = c.teacher;
  if (!c.init.empty()) cfg.transfer.init = c.init;
  if (c.lmft) cfg.lmft.enabled = true;
  if (const char* env = std::getenv("CONFSV_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw ConfigError("CONFSV_THREADS must be a positive integer");
    cfg.threads = static_cast<std::size_t>(v);
  }
  return cfg;
}

void make_run_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create run directory " + dir);
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write " + path);
  f << text;
  if (!f) throw DataError("write failed for " + path);
}

Corpus load_corpus(const RunConfig& cfg) {
  if (cfg.data.corpus.empty()) throw ConfigError("no corpus given ([data] corpus or --corpus)");
  return read_corpus(cfg.data.corpus);
}

// Checkpoint metadata beyond the encoder fields.
std::string need(const ConfigMap& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw DataError("checkpoint lacks '" + key + "'");
  return it->second;
}

std::size_t need_size(const ConfigMap& m, const std::string& key) {
  const std::string v = need(m, key);
  try {
    std::size_t pos = 0;
    const unsigned long long n = std::stoull(v, &pos);
    if (pos == v.size()) return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
  }
  throw DataError("checkpoint field '" + key + "' is not an integer: " + v);
}

ConfigMap base_meta(const std::string& kind, const EncoderConfig& enc, const RunConfig& cfg) {
  ConfigMap m = encoder_config_to_map(enc);
  m["model.kind"] = kind;
  m["run.seed"] = std::to_string(cfg.require_seed());
  m["run.name"] = cfg.name;
  return m;
}

std::unique_ptr<AsrModel> load_asr(const Checkpoint& ck) {
  if (need(ck.config, "model.kind") != "asr") throw ConfigError("expected an ASR checkpoint");
  auto m = std::make_unique<AsrModel>(encoder_config_from_map(ck.config), need_size(ck.config, "asr.vocab"));
  load_checkpoint(ck, *m);
  return m;
}

std::unique_ptr<SpeakerModel> load_speaker(const Checkpoint& ck) {
  if (need(ck.config, "model.kind") != "speaker") throw ConfigError("expected a speaker checkpoint");
  SpeakerModelOptions o;
  o.num_speakers = need_size(ck.config, "speaker.classes");
  o.asr_vocab = need_size(ck.config, "speaker.asr_vocab");
  o.rate_match = need(ck.config, "speaker.rate_match") == "1";
  auto m = std::make_unique<SpeakerModel>(encoder_config_from_map(ck.config), o);
  load_checkpoint(ck, *m);
  return m;
}

Checkpoint read_existing(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing ") + what + " checkpoint path");
  if (!fs::exists(path)) throw DataError(std::string(what) + " checkpoint not found: " + path);
  return read_checkpoint(path);
}

// Any checkpoint carrying an encoder: ASR or speaker model.
struct Backbone {
  std::unique_ptr<AsrModel> asr;
  std::unique_ptr<SpeakerModel> speaker;
  ConformerEncoder& encoder() { return asr ? asr->encoder() : speaker->encoder(); }
};

Backbone load_backbone(const std::string& path) {
  const Checkpoint ck = read_existing(path, "backbone");
  Backbone b;
  const std::string kind = need(ck.config, "model.kind");
  if (kind == "asr") {
    b.asr = load_asr(ck);
  } else if (kind == "speaker") {
    b.speaker = load_speaker(ck);
  } else {
    throw ConfigError("checkpoint " + path + " has no encoder (kind " + kind + ")");
  }
  return b;
}

std::string hash_hex(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Embedding model reconstructed from a speaker or adaptation checkpoint.
struct Embedder {
  std::unique_ptr<SpeakerModel> speaker;
  Backbone backbone;
  std::unique_ptr<SpeakerAdaptation> adaptation;

  EmbedFn fn() {
    if (speaker) return [this](const Var& x) { return speaker->embed(x, ForwardCtx{}); };
    return [this](const Var& x) { return adaptation->embed(x, ForwardCtx{}); };
  }
};

Embedder load_embedder(const std::string& path) {
  const Checkpoint ck = read_existing(path, "model");
  Embedder e;
  const std::string kind = need(ck.config, "model.kind");
  if (kind == "speaker") {
    e.speaker = load_speaker(ck);
    return e;
  }
  if (kind != "adaptation") throw ConfigError("checkpoint " + path + " does not produce speaker embeddings");
  e.backbone = load_backbone(need(ck.config, "backbone.path"));
  if (hash_hex(module_hash(e.backbone.encoder())) != need(ck.config, "backbone.hash")) {
    throw DataError("backbone checkpoint changed since adaptation training");
  }
  AdaptationConfig a;
  a.variant = parse_variant(need(ck.config, "adapt.variant"));
  a.layers = need_size(ck.config, "adapt.layers");
  a.light_layers = need_size(ck.config, "adapt.light_layers");
  a.light.dim = need_size(ck.config, "adapt.light_dim");
  a.light.heads = need_size(ck.config, "adapt.light_heads");
  a.light.hidden = need_size(ck.config, "adapt.light_hidden");
  a.light.conv_kernel = need_size(ck.config, "adapt.light_conv_kernel");
  e.adaptation = build_adaptation(e.backbone.encoder(), a, need_size(ck.config, "adapt.classes"));
  load_checkpoint(ck, *e.adaptation);
  return e;
}

void finish_training(const std::string& out, const std::string& ckpt_name, const Checkpoint& ck,
                     const std::vector<EpochRecord>& log, const RunConfig& cfg, std::ostream& os) {
  write_checkpoint(join(out, ckpt_name), ck);
  write_loss_csv(join(out, "loss.csv"), log);
  write_text(join(out, "config.ini"), run_config_to_ini(cfg));
  for (const auto& r : log) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "epoch %zu %-6s loss %.6f lr %.3e\n", r.epoch, r.phase.c_str(), r.loss, r.lr);
    os << buf;
  }
  os << "wrote " << join(out, ckpt_name) << '\n';
}

// ---- commands ----

int cmd_gen_data(const Common& c, std::size_t speakers, std::size_t utts, std::size_t vocab, std::ostream& os) {
  RunConfig cfg = resolve_config(c);
  SynthOptions so;
  so.vocab = vocab;
  const Corpus corpus = synth_corpus(speakers, utts, cfg.require_seed(), so);
  write_corpus(c.out, corpus);
  os << "wrote " << corpus.utts.size() << " utterances of " << corpus.num_speakers << " speakers to " << c.out
     << '\n';
  return kExitOk;
}

int cmd_pretrain_asr(const Common& c, std::ostream& os) {
  RunConfig cfg = resolve_config(c);
  cfg.require_seed();
  cfg.encoder.validate();
  const Corpus corpus = load_corpus(cfg);
  const CorpusSplit split = split_corpus(corpus, cfg.data.heldout_per_speaker);
  make_run_dir(c.out);
  AsrModel model(cfg.encoder, corpus.vocab);
  model.initialize(derive_seed(*cfg.seed, "asr"));
  const auto log = pretrain_asr(model, split.train, cfg);
  ConfigMap meta = base_meta("asr", cfg.encoder, cfg);
  meta["asr.vocab"] = std::to_string(corpus.vocab);
  finish_training(c.out, "asr.ckpt", snapshot(model, meta), log, cfg, os);
  return kExitOk;
}

int cmd_train(const Common& c, bool distill, std::ostream& os) {
  RunConfig cfg = resolve_config(c);
  if (distill) {
    cfg.strategy = Strategy::kDistill;
  } else if (!cfg.transfer.init.empty()) {
    cfg.strategy = Strategy::kPretrainedInit;
  } else if (cfg.strategy != Strategy::kScratch && cfg.strategy != Strategy::kPretrainedInit) {
    throw ConfigError("train handles the scratch and pretrained-init strategies");
  }
  cfg.validate();
  const Corpus corpus = load_corpus(cfg);
  const CorpusSplit split = split_corpus(corpus, cfg.data.heldout_per_speaker);

  std::unique_ptr<AsrModel> teacher;
  SpeakerModelOptions opts;
  opts.num_speakers = training_classes(corpus.num_speakers, cfg.data);
  if (distill) {
    teacher = load_asr(read_existing(cfg.transfer.teacher, "teacher"));
    const std::size_t ts = teacher->encoder().config().subsample, ss = cfg.encoder.subsample;
    if (ss != ts && !(ss == 2 && ts == 4)) {
      throw ConfigError("student rate 1/" + std::to_string(ss) + " cannot be matched to teacher rate 1/" +
                        std::to_string(ts));
    }
    opts.asr_vocab = teacher->vocab();
    opts.rate_match = ss != ts;
  }
  SpeakerModel model(cfg.encoder, opts);
  model.initialize(derive_seed(*cfg.seed, "model"));
  if (cfg.strategy == Strategy::kPretrainedInit) {
    Backbone init = load_backbone(cfg.transfer.init);
    const EncoderConfig& ic = init.encoder().config();
    if (ic.layers != cfg.encoder.layers || ic.dim != cfg.encoder.dim || ic.subsample != cfg.encoder.subsample) {
      throw ConfigError("init checkpoint encoder does not match the configured encoder");
    }
    load_checkpoint(snapshot(init.encoder()), model.encoder());
  }
  make_run_dir(c.out);
  const auto log = train_speaker_model(model, split.train, corpus.num_speakers, cfg, teacher.get());
  ConfigMap meta = base_meta("speaker", cfg.encoder, cfg);
  meta["speaker.classes"] = std::to_string(opts.num_speakers);
  meta["speaker.asr_vocab"] = std::to_string(opts.asr_vocab);
  meta["speaker.rate_match"] = opts.rate_match ? "1" : "0";
  meta["run.strategy"] = strategy_name(cfg.strategy);
  finish_training(c.out, "speaker.ckpt", snapshot(model, meta), log, cfg, os);
  return kExitOk;
}

int cmd_adapt(const Common& c, std::ostream& os) {
  RunConfig cfg = resolve_config(c);
  cfg.strategy = Strategy::kAdapt;
  cfg.validate();
  const Corpus corpus = load_corpus(cfg);
  const CorpusSplit split = split_corpus(corpus, cfg.data.heldout_per_speaker);
  Backbone backbone = load_backbone(cfg.transfer.teacher);
  const std::uint64_t before = module_hash(backbone.encoder());
  const std::size_t classes = training_classes(corpus.num_speakers, cfg.data);
  auto module = build_adaptation(backbone.encoder(), cfg.adaptation, classes);
  module->initialize(derive_seed(*cfg.seed, "adaptation"));
  make_run_dir(c.out);
  const auto log = train_adaptation(*module, split.train, corpus.num_speakers, cfg);
  if (module_hash(backbone.encoder()) != before) throw ContractError("adaptation training modified the backbone");
  ConfigMap meta = base_meta("adaptation", backbone.encoder().config(), cfg);
  const AdaptationConfig& a = cfg.adaptation;
  meta["adapt.variant"] = variant_name(a.variant);
  meta["adapt.layers"] = std::to_string(a.layers);
  meta["adapt.light_layers"] = std::to_string(a.light_layers);
  meta["adapt.light_dim"] = std::to_string(a.light.dim);
  meta["adapt.light_heads"] = std::to_string(a.light.heads);
  meta["adapt.light_hidden"] = std::to_string(a.light.hidden);
  meta["adapt.light_conv_kernel"] = std::to_string(a.light.conv_kernel);
  meta["adapt.classes"] = std::to_string(classes);
  meta["backbone.path"] = fs::absolute(cfg.transfer.teacher).string();
  meta["backbone.hash"] = hash_hex(before);
  finish_training(c.out, "adaptation.ckpt", snapshot(*module, meta), log, cfg, os);
  os << "backbone hash " << hash_hex(before) << " unchanged, " << module->num_adaptation_params()
     << " adaptation parameters\n";
  return kExitOk;
}

UttList select_split(const Corpus& corpus, const CorpusSplit& split, const std::string& which) {
  if (which == "heldout") return split.heldout;
  if (which == "train") return split.train;
  if (which == "all") {
    UttList all;
    for (const Utterance& u : corpus.utts) all.push_back(&u);
    return all;
  }
  throw ConfigError("unknown split '" + which + "' (heldout|train|all)");
}

int cmd_probe(const Common& c, const std::string& checkpoint, std::ostream& os) {
  RunConfig cfg = resolve_config(c);
  const std::uint64_t seed = cfg.require_seed();
  const Corpus corpus = load_corpus(cfg);
  Backbone b = load_backbone(checkpoint);
  UttList utts;
  std::map<std::size_t, std::size_t> taken;
  for (const Utterance& u : corpus.utts)
    if (cfg.probe.utts_per_speaker == 0 || taken[u.speaker]++ < cfg.probe.utts_per_speaker) utts.push_back(&u);
  ProbeOptions po;
  po.hidden = cfg.probe.hidden;
  po.iterations = cfg.probe.iterations;
  po.learning_rate = cfg.probe.lr;
  po.seed = derive_seed(seed, "probe");
  const auto acc = probe_encoder(b.encoder(), utts, po);
  make_run_dir(c.out);
  write_probe_csv(join(c.out, "probe.csv"), acc);
  for (std::size_t l = 0; l < acc.size(); ++l) os << "layer " << l + 1 << " accuracy " << acc[l] << '\n';
  return kExitOk;
}

int cmd_embed(const Common& c, const std::string& checkpoint, const std::string& which, std::ostream& os) {
  RunConfig cfg = resolve_config(c);
  const Corpus corpus = load_corpus(cfg);
  const CorpusSplit split = split_corpus(corpus, cfg.data.heldout_per_speaker);
  const UttList utts = select_split(corpus, split, which);
  Embedder e = load_embedder(checkpoint);
  const EmbeddingStore store = extract_embeddings(utts, e.fn());
  make_run_dir(c.out);
  store.save(join(c.out, "embeddings.bin"));
  write_quality(join(c.out, "quality.txt"), quality_table(utts));
  os << "wrote " << store.size() << " embeddings to " << join(c.out, "embeddings.bin") << '\n';
  return kExitOk;
}

std::vector<std::string> read_ids(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path);
  std::vector<std::string> ids;
  for (std::string id; f >> id;) ids.push_back(id);
  return ids;
}

void print_metrics(std::ostream& os, const EvalReport& r, const EvalOptions& o) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "trials %zu (%zu target)  raw EER %.3f%% minDCF %.4f\n", r.targets + r.nontargets,
                r.targets, r.raw.eer, r.raw.min_dcf);
  os << buf;
  if (o.snorm) {
    std::snprintf(buf, sizeof(buf), "s-norm EER %.3f%% minDCF %.4f\n", r.snorm.eer, r.snorm.min_dcf);
    os << buf;
  }
  if (o.qmf) {
    std::snprintf(buf, sizeof(buf), "QMF    EER %.3f%% minDCF %.4f\n", r.calibrated.eer, r.calibrated.min_dcf);
    os << buf;
  }
}

ScoreKind output_kind(const EvalOptions& o) {
  return o.qmf ? ScoreKind::kCalibrated : o.snorm ? ScoreKind::kSnorm : ScoreKind::kRaw;
}

struct ScoreArgs {
  std::string embeddings, trials, cohort, quality, qmf_trials;
  bool snorm = false, qmf = false;
  std::size_t top_k = 0;
};

int cmd_score(const Common& c, const ScoreArgs& a, std::ostream& os) {
  RunConfig cfg = resolve_config(c);
  const EmbeddingStore store = EmbeddingStore::load(a.embeddings);
  const std::vector<Trial> trials = parse_trials(a.trials);
  EvalOptions o{a.snorm, a.qmf, a.top_k ? a.top_k : cfg.scoring.top_k};
  std::vector<std::string> cohort;
  if (a.snorm) {
    if (a.cohort.empty()) throw ConfigError("--snorm needs --cohort");
    cohort = read_ids(a.cohort);
  }
  QualityTable quality;
  std::vector<Trial> fit;
  if (a.qmf) {
    if (a.quality.empty() || a.qmf_trials.empty()) throw ConfigError("--qmf needs --quality and --qmf-trials");
    quality = read_quality(a.quality);
    fit = parse_trials(a.qmf_trials);
  }
  make_run_dir(c.out);
  std::size_t nt = 0;
  for (const Trial& t : trials) nt += t.target;
  if (nt == 0 || nt == trials.size()) {
    // Scores only; metrics need both classes.
    if (a.qmf) throw DataError("QMF scoring needs labelled trials of both classes");
    const auto scored = score_trials(trials, store, a.snorm ? cohort : std::vector<std::string>{}, o.top_k);
    write_scores(join(c.out, "scores.txt"), scored, output_kind(o));
    os << "scored " << scored.size() << " trials\n";
    return kExitOk;
  }
  const EvalReport r = evaluate(trials, store, quality, cohort, fit, o);
  write_scores(join(c.out, "scores.txt"), r.scored, output_kind(o));
  write_metrics_csv(join(c.out, "metrics.csv"), r, o);
  print_metrics(os, r, o);
  return kExitOk;
}

int cmd_evaluate(const Common& c, const std::string& checkpoint, bool snorm, bool qmf, std::ostream& os) {
  RunConfig cfg = resolve_config(c);
  const std::uint64_t seed = cfg.require_seed();
  const Corpus corpus = load_corpus(cfg);
  const CorpusSplit split = split_corpus(corpus, cfg.data.heldout_per_speaker);
  Embedder e = load_embedder(checkpoint);
  EvalOptions o{snorm, qmf, cfg.scoring.top_k};

  UttList cohort_utts;
  if (snorm || qmf) {
    std::vector<std::size_t> order(split.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, "cohort"));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    order.resize(std::min(order.size(), cfg.scoring.cohort_size));
    std::sort(order.begin(), order.end());
    for (std::size_t i : order) cohort_utts.push_back(split.train[i]);
  }
  UttList all = split.heldout;
  all.insert(all.end(), cohort_utts.begin(), cohort_utts.end());
  const EmbeddingStore store = extract_embeddings(all, e.fn());
  const QualityTable quality = quality_table(all);
  const std::vector<Trial> trials = make_trials(split.heldout, cfg.scoring.trials_per_class, seed);
  std::vector<std::string> cohort;
  for (const Utterance* u : cohort_utts) cohort.push_back(u->id);
  std::vector<Trial> fit;
  if (qmf) fit = make_trials(cohort_utts, cfg.scoring.trials_per_class, derive_seed(seed, "qmf"));
  const EvalReport r = evaluate(trials, store, quality, cohort, fit, o);
  make_run_dir(c.out);
  write_trials(join(c.out, "trials.txt"), trials);
  store.save(join(c.out, "embeddings.bin"));
  write_quality(join(c.out, "quality.txt"), quality);
  write_scores(join(c.out, "scores.txt"), r.scored, output_kind(o));
  write_metrics_csv(join(c.out, "metrics.csv"), r, o);
  print_metrics(os, r, o);
  return kExitOk;
}

struct CountArgs {
  std::string preset = "small";
  std::optional<std::size_t> layers, dim, heads, hidden, subsample, kernel;
  std::string scope = "speaker";
  std::size_t vocab = 1024;
  bool macs = false;
  std::string convention = "profiler";
  double seconds = 5.0;
  std::string variant;
  std::size_t adapt_layers = 0, light_layers = 0;
};

int cmd_count(const Common& c, const CountArgs& a, std::ostream& os) {
  EncoderConfig enc = EncoderConfig::named(a.preset);
  if (a.layers) enc.layers = *a.layers;
  if (a.dim) enc.dim = *a.dim;
  if (a.heads) enc.heads = *a.heads;
  if (a.hidden) enc.hidden = *a.hidden;
  if (a.subsample) enc.subsample = *a.subsample;
  if (a.kernel) enc.conv_kernel = *a.kernel;
  enc.validate();
  std::vector<CountReport> reports;
  if (!a.variant.empty()) {
    AdaptationConfig ac;
    ac.variant = parse_variant(a.variant);
    ac.layers = a.adapt_layers;
    ac.light_layers = a.light_layers;
    reports.push_back(count_adaptation_params(ac, enc));
    if (a.macs) reports.push_back(estimate_adaptation_macs(ac, enc, a.seconds, parse_convention(a.convention)));
  } else {
    reports.push_back(count_params(enc, parse_scope(a.scope), a.vocab));
    if (a.macs) reports.push_back(estimate_macs(enc, a.seconds, parse_convention(a.convention)));
  }
  for (const auto& r : reports) os << r.to_text();
  if (!c.out.empty()) {
    make_run_dir(c.out);
    std::string csv;
    for (const auto& r : reports) csv += r.to_csv();
    write_text(join(c.out, "counts.csv"), csv);
  }
  return kExitOk;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kData:
    case ErrorKind::kParse:
    case ErrorKind::kIndex: return kExitData;
    case ErrorKind::kNumeric: return kExitNumeric;
    default: return kExitFailure;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conformer speaker verification toolkit"};
  app.require_subcommand(1);
  Common c;
  std::size_t speakers = 20, utts = 50, vocab = 8;
  std::string checkpoint, split = "heldout";
  bool snorm = false, qmf = false;
  ScoreArgs sa;
  CountArgs ca;

  auto* gen = app.add_subcommand("gen-data", "Synthesize a corpus");
  add_common(gen, c);
  gen->add_option("--speakers", speakers, "Number of speakers")->check(CLI::Range(2, 100000));
  gen->add_option("--utts", utts, "Utterances per speaker")->check(CLI::Range(1, 100000));
  gen->add_option("--vocab", vocab, "Token vocabulary size")->check(CLI::Range(1, 26));

  auto* asr = app.add_subcommand("pretrain-asr", "Train the CTC teacher");
  add_common(asr, c);

  auto* train = app.add_subcommand("train", "Train a speaker model (scratch or pretrained-init)");
  add_common(train, c);
  train->add_option("--init", c.init, "ASR checkpoint for pretrained-init");
  train->add_flag("--lmft", c.lmft, "Append large-margin fine-tuning");

  auto* distill = app.add_subcommand("distill", "Train a speaker model with frame-level distillation");
  add_common(distill, c);
  distill->add_option("--teacher", c.teacher, "ASR teacher checkpoint");
  distill->add_flag("--lmft", c.lmft, "Append large-margin fine-tuning");

  auto* adapt = app.add_subcommand("adapt", "Train the adaptation module on a frozen backbone");
  add_common(adapt, c);
  adapt->add_option("--teacher", c.teacher, "Backbone checkpoint");

  auto* probe = app.add_subcommand("probe", "Per-layer linear probe of an encoder");
  add_common(probe, c);
  probe->add_option("--checkpoint", checkpoint, "ASR or speaker checkpoint")->required();

  auto* embed = app.add_subcommand("embed", "Extract speaker embeddings");
  add_common(embed, c);
  embed->add_option("--checkpoint", checkpoint, "Speaker or adaptation checkpoint")->required();
  embed->add_option("--split", split, "heldout|train|all");

  auto* score = app.add_subcommand("score", "Score trials from an embedding store");
  add_common(score, c);
  score->add_option("--embeddings", sa.embeddings, "Embedding store")->required();
  score->add_option("--trials", sa.trials, "Trial list")->required();
  score->add_flag("--snorm", sa.snorm, "Adapted s-norm");
  score->add_option("--cohort", sa.cohort, "File of cohort ids");
  score->add_option("--top-k", sa.top_k, "Cohort scores kept per side");
  score->add_flag("--qmf", sa.qmf, "QMF calibration");
  score->add_option("--quality", sa.quality, "Quality table");
  score->add_option("--qmf-trials", sa.qmf_trials, "Labelled trials for fitting QMF");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Embed, score and measure held-out trials");
  add_common(evaluate_cmd, c);
  evaluate_cmd->add_option("--checkpoint", checkpoint, "Speaker or adaptation checkpoint")->required();
  evaluate_cmd->add_flag("--snorm", snorm, "Adapted s-norm");
  evaluate_cmd->add_flag("--qmf", qmf, "QMF calibration");

  auto* count = app.add_subcommand("count", "Parameter and MACs accounting");
  add_common(count, c, false);
  count->add_option("--preset", ca.preset, "Encoder preset");
  count->add_option("--layers", ca.layers);
  count->add_option("--dim", ca.dim);
  count->add_option("--heads", ca.heads);
  count->add_option("--hidden", ca.hidden);
  count->add_option("--subsample", ca.subsample);
  count->add_option("--conv-kernel", ca.kernel);
  count->add_option("--scope", ca.scope, "encoder|encoder+decoder|speaker");
  count->add_option("--vocab", ca.vocab, "Decoder vocabulary");
  count->add_flag("--macs", ca.macs, "Also estimate MACs");
  count->add_option("--convention", ca.convention, "profiler|dense");
  count->add_option("--seconds", ca.seconds, "Input length for MACs");
  count->add_option("--variant", ca.variant, "Adaptation variant V1|V2|V3");
  count->add_option("--adapt-layers", ca.adapt_layers, "Adaptation L");
  count->add_option("--light-layers", ca.light_layers, "Adaptation K");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(c, speakers, utts, vocab, out);
    if (asr->parsed()) return cmd_pretrain_asr(c, out);
    if (train->parsed()) return cmd_train(c, false, out);
    if (distill->parsed()) return cmd_train(c, true, out);
    if (adapt->parsed()) return cmd_adapt(c, out);
    if (probe->parsed()) return cmd_probe(c, checkpoint, out);
    if (embed->parsed()) return cmd_embed(c, checkpoint, split, out);
    if (score->parsed()) return cmd_score(c, sa, out);
    if (evaluate_cmd->parsed()) return cmd_evaluate(c, checkpoint, snorm, qmf, out);
    if (count->parsed()) return cmd_count(c, ca, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace confsv::cli
