// core/src/config.cc

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

#include "confsv/config.h"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "confsv/error.h"

namespace confsv {

namespace pt = boost::property_tree;

namespace {

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  template <typename T>
  void get(const std::string& section, const std::string& key, T& out) {
    known_.insert(section + "." + key);
    auto node = tree_.get_child_optional(pt::ptree::path_type(section + "." + key, '.'));
    if (!node) return;
    const std::string raw = node->data();
    if constexpr (std::is_same_v<T, std::string>) {
      out = raw;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") {
        out = true;
      } else if (raw == "false" || raw == "0" || raw == "no" || raw == "off") {
        out = false;
      } else {
        fail(section, key, raw, "a boolean");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      std::size_t pos = 0;
      try {
        out = std::stod(raw, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != raw.size() || !std::isfinite(out)) fail(section, key, raw, "a finite number");
    } else {
      std::size_t pos = 0;
      long long v = 0;
      try {
        v = std::stoll(raw, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != raw.size()) fail(section, key, raw, "an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v < 0) fail(section, key, raw, "a non-negative integer");
      }
      out = static_cast<T>(v);
    }
  }

  bool has(const std::string& section, const std::string& key) const {
    return static_cast<bool>(tree_.get_child_optional(pt::ptree::path_type(section + "." + key, '.')));
  }

  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      if (body.empty() && !body.data().empty()) {
        throw ConfigError("config: key '" + section + "' outside any section");
      }
      for (const auto& [key, value] : body) {
        if (!known_.count(section + "." + key)) throw ConfigError("config: unknown key [" + section + "] " + key);
      }
    }
  }

 private:
  [[noreturn]] static void fail(const std::string& s, const std::string& k, const std::string& raw,
                                const char* what) {
    throw ConfigError("config: [" + s + "] " + k + " = '" + raw + "' is not " + what);
  }

  const pt::ptree& tree_;
  std::set<std::string> known_;
};

}  // namespace

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kScratch: return "scratch";
    case Strategy::kPretrainedInit: return "pretrained-init";
    case Strategy::kDistill: return "distill";
    case Strategy::kAdapt: return "adapt";
  }
  return "?";
}

Strategy parse_strategy(const std::string& s) {
  if (s == "scratch") return Strategy::kScratch;
  if (s == "pretrained-init") return Strategy::kPretrainedInit;
  if (s == "distill") return Strategy::kDistill;
  if (s == "adapt") return Strategy::kAdapt;
  throw ConfigError("unknown strategy '" + s + "' (scratch|pretrained-init|distill|adapt)");
}

std::uint64_t RunConfig::require_seed() const {
  if (!seed) throw ConfigError("config: a seed is required ([experiment] seed or --seed)");
  return *seed;
}

void RunConfig::validate() const {
  require_seed();
  encoder.validate();
  if (optim.lr <= 0.0) throw ConfigError("config: lr must be positive");
  if (optim.weight_decay < 0.0) throw ConfigError("config: weight_decay must be non-negative");
  if (optim.batch_size == 0) throw ConfigError("config: batch_size must be positive");
  if (optim.epochs == 0) throw ConfigError("config: epochs must be positive");
  if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0 && optim.beta2 >= 0.0 && optim.beta2 < 1.0)) {
    throw ConfigError("config: betas must lie in [0, 1)");
  }
  if (optim.eps <= 0.0) throw ConfigError("config: eps must be positive");
  if (loss.scale <= 0.0) throw ConfigError("config: loss scale must be positive");
  if (loss.margin < 0.0 || loss.margin >= M_PI / 2) throw ConfigError("config: margin outside [0, pi/2)");
  if (lmft.margin < 0.0 || lmft.margin >= M_PI / 2) throw ConfigError("config: lmft margin outside [0, pi/2)");
  if (loss.alpha < 0.0) throw ConfigError("config: alpha must be non-negative");
  if (data.crop_seconds <= 0.0 || lmft.crop_seconds <= 0.0) throw ConfigError("config: crop must be positive");
  if (data.augment_prob < 0.0 || data.augment_prob > 1.0) throw ConfigError("config: augment_prob outside [0, 1]");
  if (transfer.frozen_epochs < 0) throw ConfigError("config: frozen_epochs must be non-negative");
  if (scoring.top_k < 2 || scoring.cohort_size < scoring.top_k) {
    throw ConfigError("config: need cohort_size >= top_k >= 2");
  }
  if (strategy == Strategy::kPretrainedInit && transfer.init.empty()) {
    throw ConfigError("config: pretrained-init needs [transfer] init");
  }
  if ((strategy == Strategy::kDistill || strategy == Strategy::kAdapt) && transfer.teacher.empty()) {
    throw ConfigError("config: " + strategy_name(strategy) + " needs [transfer] teacher");
  }
}

RunConfig parse_run_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config: " + std::string(e.message()) + " at line " + std::to_string(e.line()));
  }
  Reader r(tree);
  RunConfig c;
  r.get("experiment", "name", c.name);
  if (r.has("experiment", "seed")) {
    std::uint64_t seed = 0;
    r.get("experiment", "seed", seed);
    c.seed = seed;
  }
  std::string strategy = strategy_name(c.strategy);
  r.get("experiment", "strategy", strategy);
  c.strategy = parse_strategy(strategy);
  r.get("experiment", "threads", c.threads);

  r.get("encoder", "preset", c.encoder_preset);
  c.encoder = EncoderConfig::named(c.encoder_preset);
  r.get("encoder", "layers", c.encoder.layers);
  r.get("encoder", "dim", c.encoder.dim);
  r.get("encoder", "heads", c.encoder.heads);
  r.get("encoder", "hidden", c.encoder.hidden);
  r.get("encoder", "subsample", c.encoder.subsample);
  r.get("encoder", "conv_kernel", c.encoder.conv_kernel);
  r.get("encoder", "dropout", c.encoder.dropout);
  r.get("encoder", "bn_momentum", c.encoder.bn_momentum);

  std::string variant = variant_name(c.adaptation.variant);
  r.get("adaptation", "variant", variant);
  c.adaptation.variant = parse_variant(variant);
  r.get("adaptation", "layers", c.adaptation.layers);
  r.get("adaptation", "light_layers", c.adaptation.light_layers);
  r.get("adaptation", "light_dim", c.adaptation.light.dim);
  r.get("adaptation", "light_heads", c.adaptation.light.heads);
  r.get("adaptation", "light_hidden", c.adaptation.light.hidden);
  r.get("adaptation", "light_conv_kernel", c.adaptation.light.conv_kernel);

  r.get("optim", "lr", c.optim.lr);
  r.get("optim", "weight_decay", c.optim.weight_decay);
  r.get("optim", "beta1", c.optim.beta1);
  r.get("optim", "beta2", c.optim.beta2);
  r.get("optim", "eps", c.optim.eps);
  r.get("optim", "epochs", c.optim.epochs);
  r.get("optim", "warmup_epochs", c.optim.warmup_epochs);
  r.get("optim", "batch_size", c.optim.batch_size);
  r.get("optim", "grad_clip", c.optim.grad_clip);

  r.get("loss", "scale", c.loss.scale);
  r.get("loss", "margin", c.loss.margin);
  r.get("loss", "alpha", c.loss.alpha);

  r.get("lmft", "enabled", c.lmft.enabled);
  r.get("lmft", "margin", c.lmft.margin);
  r.get("lmft", "crop_seconds", c.lmft.crop_seconds);
  r.get("lmft", "epochs", c.lmft.epochs);
  r.get("lmft", "lr", c.lmft.lr);

  r.get("data", "corpus", c.data.corpus);
  r.get("data", "crop_seconds", c.data.crop_seconds);
  r.get("data", "augment_prob", c.data.augment_prob);
  r.get("data", "speed_perturb", c.data.speed_perturb);
  r.get("data", "heldout_per_speaker", c.data.heldout_per_speaker);

  r.get("asr", "epochs", c.asr.epochs);
  r.get("asr", "lr", c.asr.lr);
  r.get("asr", "crop_seconds", c.asr.crop_seconds);

  r.get("transfer", "frozen_epochs", c.transfer.frozen_epochs);
  r.get("transfer", "init", c.transfer.init);
  r.get("transfer", "teacher", c.transfer.teacher);

  r.get("scoring", "cohort_size", c.scoring.cohort_size);
  r.get("scoring", "top_k", c.scoring.top_k);
  r.get("scoring", "trials_per_class", c.scoring.trials_per_class);

  r.get("probe", "hidden", c.probe.hidden);
  r.get("probe", "iterations", c.probe.iterations);
  r.get("probe", "lr", c.probe.lr);
  r.get("probe", "utts_per_speaker", c.probe.utts_per_speaker);

  r.reject_unknown();
  c.encoder.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_to_ini(const RunConfig& c) {
  std::ostringstream s;
  s.precision(17);
  s << "[experiment]\nname = " << c.name << '\n';
  if (c.seed) s << "seed = " << *c.seed << '\n';
  s << "strategy = " << strategy_name(c.strategy) << "\nthreads = " << c.threads << "\n\n";
  const EncoderConfig& e = c.encoder;
  s << "[encoder]\npreset = " << c.encoder_preset << "\nlayers = " << e.layers << "\ndim = " << e.dim
    << "\nheads = " << e.heads << "\nhidden = " << e.hidden << "\nsubsample = " << e.subsample
    << "\nconv_kernel = " << e.conv_kernel << "\ndropout = " << e.dropout
    << "\nbn_momentum = " << e.bn_momentum << "\n\n";
  const AdaptationConfig& a = c.adaptation;
  s << "[adaptation]\nvariant = " << variant_name(a.variant) << "\nlayers = " << a.layers
    << "\nlight_layers = " << a.light_layers << "\nlight_dim = " << a.light.dim
    << "\nlight_heads = " << a.light.heads << "\nlight_hidden = " << a.light.hidden
    << "\nlight_conv_kernel = " << a.light.conv_kernel << "\n\n";
  const OptimConfig& o = c.optim;
  s << "[optim]\nlr = " << o.lr << "\nweight_decay = " << o.weight_decay << "\nbeta1 = " << o.beta1
    << "\nbeta2 = " << o.beta2 << "\neps = " << o.eps << "\nepochs = " << o.epochs
    << "\nwarmup_epochs = " << o.warmup_epochs << "\nbatch_size = " << o.batch_size
    << "\ngrad_clip = " << o.grad_clip << "\n\n";
  s << "[loss]\nscale = " << c.loss.scale << "\nmargin = " << c.loss.margin << "\nalpha = " << c.loss.alpha
    << "\n\n";
  s << "[lmft]\nenabled = " << (c.lmft.enabled ? "true" : "false") << "\nmargin = " << c.lmft.margin
    << "\ncrop_seconds = " << c.lmft.crop_seconds << "\nepochs = " << c.lmft.epochs << "\nlr = " << c.lmft.lr
    << "\n\n";
  s << "[data]\ncorpus = " << c.data.corpus << "\ncrop_seconds = " << c.data.crop_seconds
    << "\naugment_prob = " << c.data.augment_prob
    << "\nspeed_perturb = " << (c.data.speed_perturb ? "true" : "false")
    << "\nheldout_per_speaker = " << c.data.heldout_per_speaker << "\n\n";
  s << "[asr]\nepochs = " << c.asr.epochs << "\nlr = " << c.asr.lr << "\ncrop_seconds = " << c.asr.crop_seconds
    << "\n\n";
  s << "[transfer]\nfrozen_epochs = " << c.transfer.frozen_epochs << "\ninit = " << c.transfer.init
    << "\nteacher = " << c.transfer.teacher << "\n\n";
  s << "[scoring]\ncohort_size = " << c.scoring.cohort_size << "\ntop_k = " << c.scoring.top_k
    << "\ntrials_per_class = " << c.scoring.trials_per_class << "\n\n";
  s << "[probe]\nhidden = " << c.probe.hidden << "\niterations = " << c.probe.iterations << "\nlr = " << c.probe.lr
    << "\nutts_per_speaker = " << c.probe.utts_per_speaker << '\n';
  return s.str();
}

}  // namespace confsv
