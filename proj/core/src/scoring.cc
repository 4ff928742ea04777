// core/src/scoring.cc

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

#include "confsv/scoring.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "confsv/error.h"

namespace confsv {

namespace {

template <typename T>
double cosine_impl(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    aa += static_cast<double>(a[i]) * static_cast<double>(a[i]);
    bb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
  }
  if (aa == 0.0 || bb == 0.0) throw DataError("cosine: degenerate (zero) embedding");
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

// Counts of targets/nontargets at or above each distinct score, in
// increasing score order.
struct Sweep {
  std::vector<double> thresholds;
  std::vector<double> far;  // nontargets accepted / nontargets
  std::vector<double> frr;  // targets rejected / targets
};

Sweep sweep(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw DimensionError("metrics: scores/labels length mismatch");
  std::size_t nt = 0;
  for (bool l : labels) nt += l;
  const std::size_t nn = labels.size() - nt;
  if (nt == 0 || nn == 0) throw DataError("metrics: need both target and nontarget trials");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  Sweep s;
  std::size_t rejected_t = 0, rejected_n = 0;  // scores strictly below the threshold
  for (std::size_t i = 0; i < order.size();) {
    const double thr = scores[order[i]];
    s.thresholds.push_back(thr);
    s.far.push_back(static_cast<double>(nn - rejected_n) / static_cast<double>(nn));
    s.frr.push_back(static_cast<double>(rejected_t) / static_cast<double>(nt));
    for (; i < order.size() && scores[order[i]] == thr; ++i) (labels[order[i]] ? rejected_t : rejected_n)++;
  }
  s.thresholds.push_back(std::numeric_limits<double>::infinity());
  s.far.push_back(0.0);
  s.frr.push_back(1.0);
  return s;
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

std::vector<double> qmf_features(double score, const QualityFeatures& q, bool use_quality) {
  if (!use_quality) return {score};
  return {score, q.duration_enroll, q.duration_test, q.snr_enroll, q.snr_test,
          q.magnitude_enroll, q.magnitude_test};
}

}  // namespace

double cosine_score(std::span<const double> a, std::span<const double> b) {
  return cosine_impl(a, b);
}
double cosine_score(std::span<const float> a, std::span<const float> b) {
  return cosine_impl(a, b);
}

CohortStats top_k_stats(std::vector<double> scores, std::size_t top_k) {
  if (top_k < 2 || scores.size() < top_k) {
    throw ConfigError("s-norm: need cohort size >= top_k >= 2 (cohort " +
                      std::to_string(scores.size()) + ", top_k " + std::to_string(top_k) + ")");
  }
  std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(top_k), scores.end(),
                    std::greater<double>());
  CohortStats st;
  for (std::size_t i = 0; i < top_k; ++i) st.mean += scores[i];
  st.mean /= static_cast<double>(top_k);
  for (std::size_t i = 0; i < top_k; ++i) st.std += (scores[i] - st.mean) * (scores[i] - st.mean);
  st.std = std::sqrt(st.std / static_cast<double>(top_k));
  return st;
}

double adapted_snorm(double raw, std::vector<double> enroll_cohort, std::vector<double> test_cohort,
                     std::size_t top_k) {
  const CohortStats e = top_k_stats(std::move(enroll_cohort), top_k);
  const CohortStats t = top_k_stats(std::move(test_cohort), top_k);
  if (e.std == 0.0 || t.std == 0.0) throw DataError("s-norm: degenerate cohort (zero spread)");
  return 0.5 * ((raw - e.mean) / e.std + (raw - t.mean) / t.std);
}

std::vector<Trial> parse_trials_text(const std::string& text) {
  std::vector<Trial> out;
  std::istringstream in(text);
  int lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string label, enroll, test, extra;
    if (!(ls >> label >> enroll >> test) || (ls >> extra)) {
      throw ParseError("trials line " + std::to_string(lineno) + ": expected 'label enroll test'", lineno);
    }
    if (label != "0" && label != "1") {
      throw ParseError("trials line " + std::to_string(lineno) + ": label must be 0 or 1, got '" +
                           label + "'",
                       lineno);
    }
    out.push_back({label == "1", enroll, test});
  }
  return out;
}

std::vector<Trial> parse_trials(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("trials: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_trials_text(ss.str());
}

void write_trials(const std::string& path, const std::vector<Trial>& trials) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("trials: cannot write " + path);
  for (const Trial& t : trials) f << (t.target ? 1 : 0) << ' ' << t.enroll << ' ' << t.test << '\n';
}

double eer(const std::vector<double>& scores, const std::vector<bool>& labels) {
  const Sweep s = sweep(scores, labels);
  for (std::size_t i = 0; i < s.thresholds.size(); ++i) {
    const double d = s.far[i] - s.frr[i];
    if (d > 0.0) continue;
    if (d == 0.0 || i == 0) return 100.0 * s.far[i];
    const double d_prev = s.far[i - 1] - s.frr[i - 1];
    const double t = d_prev / (d_prev - d);
    return 100.0 * (s.far[i - 1] + t * (s.far[i] - s.far[i - 1]));
  }
  return 100.0 * s.far.back();
}

double min_dcf(const std::vector<double>& scores, const std::vector<bool>& labels, double p_target,
               double c_miss, double c_fa) {
  if (!(p_target > 0.0 && p_target < 1.0) || c_miss <= 0.0 || c_fa <= 0.0) {
    throw ConfigError("min_dcf: need 0 < p_target < 1 and positive costs");
  }
  const Sweep s = sweep(scores, labels);
  const double norm = std::min(c_miss * p_target, c_fa * (1.0 - p_target));
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.thresholds.size(); ++i)
    best = std::min(best, (c_miss * s.frr[i] * p_target + c_fa * s.far[i] * (1.0 - p_target)) / norm);
  return best;
}

double QmfModel::apply(double score, const QualityFeatures& q) const {
  const std::vector<double> x = qmf_features(score, q, use_quality);
  double z = bias;
  for (std::size_t j = 0; j < x.size(); ++j) z += weights[j] * (x[j] - mean[j]) / scale[j];
  return z;
}

double qmf_apply(const QmfModel& model, double score, const QualityFeatures& q) {
  return model.apply(score, q);
}

double qmf_loss(const QmfModel& model, const std::vector<QmfTrial>& trials) {
  if (trials.empty()) throw DataError("qmf: no trials");
  double l = 0.0;
  for (const QmfTrial& t : trials) {
    const double z = model.apply(t.score, t.quality);
    l += t.target ? softplus(-z) : softplus(z);
  }
  return l / static_cast<double>(trials.size());
}

QmfModel qmf_fit(const std::vector<QmfTrial>& trials, const QmfOptions& opts) {
  std::size_t nt = 0;
  for (const QmfTrial& t : trials) nt += t.target;
  if (nt == 0 || nt == trials.size()) throw DataError("qmf: need both target and nontarget trials");
  const std::size_t N = trials.size();
  const std::size_t D = opts.use_quality ? 7 : 1;
  QmfModel m;
  m.use_quality = opts.use_quality;
  m.mean.assign(D, 0.0);
  m.scale.assign(D, 0.0);
  m.weights.assign(D, 0.0);
  std::vector<std::vector<double>> X(N);
  for (std::size_t i = 0; i < N; ++i) {
    X[i] = qmf_features(trials[i].score, trials[i].quality, opts.use_quality);
    for (std::size_t j = 0; j < D; ++j) m.mean[j] += X[i][j];
  }
  for (double& v : m.mean) v /= static_cast<double>(N);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < D; ++j) m.scale[j] += (X[i][j] - m.mean[j]) * (X[i][j] - m.mean[j]);
  for (double& v : m.scale) {
    v = std::sqrt(v / static_cast<double>(N));
    if (!(v > 0.0)) v = 1.0;
  }
  for (auto& x : X)
    for (std::size_t j = 0; j < D; ++j) x[j] = (x[j] - m.mean[j]) / m.scale[j];

  auto objective = [&](const std::vector<double>& w, double b) {
    double l = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      double z = b;
      for (std::size_t j = 0; j < D; ++j) z += w[j] * X[i][j];
      l += trials[i].target ? softplus(-z) : softplus(z);
    }
    double r = 0.0;
    for (double v : w) r += v * v;
    return l / static_cast<double>(N) + 0.5 * opts.l2 * r;
  };

  double loss = objective(m.weights, m.bias);
  double step = 1.0;
  std::vector<double> gw(D), w_new(D);
  for (m.iterations = 0; m.iterations < opts.max_iterations; ++m.iterations) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      double z = m.bias;
      for (std::size_t j = 0; j < D; ++j) z += m.weights[j] * X[i][j];
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double r = p - (trials[i].target ? 1.0 : 0.0);
      for (std::size_t j = 0; j < D; ++j) gw[j] += r * X[i][j];
      gb += r;
    }
    double gnorm2 = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
      gw[j] = gw[j] / static_cast<double>(N) + opts.l2 * m.weights[j];
      gnorm2 += gw[j] * gw[j];
    }
    gb /= static_cast<double>(N);
    gnorm2 += gb * gb;
    if (gnorm2 == 0.0) break;
    // Armijo backtracking from a step twice the last accepted one.
    step = std::min(step * 2.0, 1e3);
    double new_loss = loss;
    double b_new = m.bias;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t j = 0; j < D; ++j) w_new[j] = m.weights[j] - step * gw[j];
      b_new = m.bias - step * gb;
      new_loss = objective(w_new, b_new);
      if (new_loss <= loss - 1e-4 * step * gnorm2) break;
      step *= 0.5;
    }
    if (new_loss > loss) break;
    m.weights = w_new;
    m.bias = b_new;
    const double delta = loss - new_loss;
    loss = new_loss;
    if (delta < opts.tolerance) {
      ++m.iterations;
      break;
    }
  }
  m.loss = qmf_loss(m, trials);
  return m;
}

double estimate_snr_db(const std::vector<double>& wave) {
  constexpr std::size_t kWin = 320, kHop = 160;
  std::vector<double> energy;
  for (std::size_t s = 0; s + kWin <= wave.size(); s += kHop) {
    double e = 0.0;
    for (std::size_t i = 0; i < kWin; ++i) e += wave[s + i] * wave[s + i];
    energy.push_back(e / kWin);
  }
  if (energy.size() < 2) throw DataError("snr: input too short");
  std::sort(energy.begin(), energy.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(energy.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, energy.size() - 1);
    return energy[lo] + (pos - static_cast<double>(lo)) * (energy[hi] - energy[lo]);
  };
  constexpr double kFloor = 1e-12;
  return 10.0 * std::log10(std::max(quantile(0.9), kFloor) / std::max(quantile(0.1), kFloor));
}

void EmbeddingStore::add(const std::string& id, std::vector<float> values) {
  if (values.size() != kStoreDim) {
    throw DimensionError("embedding store: expected " + std::to_string(kStoreDim) + " values for " +
                         id + ", got " + std::to_string(values.size()));
  }
  auto it = index_.find(id);
  if (it != index_.end()) {
    values_[it->second] = std::move(values);
    return;
  }
  index_[id] = ids_.size();
  ids_.push_back(id);
  values_.push_back(std::move(values));
}

const std::vector<float>& EmbeddingStore::get(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw DataError("missing embedding for id '" + id + "'");
  return values_[it->second];
}

static_assert(std::endian::native == std::endian::little, "embedding store assumes little-endian");

std::string EmbeddingStore::serialize() const {
  std::string out = "CSEM";
  auto put = [&out](const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); };
  const std::uint32_t version = kEmbeddingStoreVersion;
  const std::uint64_t count = ids_.size();
  const std::uint32_t dim = kStoreDim;
  put(&version, 4);
  put(&count, 8);
  put(&dim, 4);
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const auto len = static_cast<std::uint32_t>(ids_[i].size());
    put(&len, 4);
    out += ids_[i];
    put(values_[i].data(), values_[i].size() * sizeof(float));
  }
  return out;
}

EmbeddingStore EmbeddingStore::deserialize(const std::string& bytes) {
  std::size_t pos = 0;
  auto take = [&](void* dst, std::size_t n) {
    if (bytes.size() - pos < n) throw DataError("embedding store: truncated data");
    std::memcpy(dst, bytes.data() + pos, n);
    pos += n;
  };
  char magic[4];
  take(magic, 4);
  if (std::memcmp(magic, "CSEM", 4) != 0) throw DataError("embedding store: bad magic");
  std::uint32_t version, dim;
  std::uint64_t count;
  take(&version, 4);
  if (version != kEmbeddingStoreVersion) throw DataError("embedding store: unsupported version");
  take(&count, 8);
  take(&dim, 4);
  if (dim != kStoreDim) throw DataError("embedding store: unexpected dimension " + std::to_string(dim));
  EmbeddingStore s;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t len;
    take(&len, 4);
    std::string id(len, '\0');
    take(id.data(), len);
    std::vector<float> v(dim);
    take(v.data(), dim * sizeof(float));
    s.add(id, std::move(v));
  }
  if (pos != bytes.size()) throw DataError("embedding store: trailing bytes");
  return s;
}

void EmbeddingStore::save(const std::string& path) const {
  const std::string bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("embedding store: cannot write " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("embedding store: write failed for " + path);
}

EmbeddingStore EmbeddingStore::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("embedding store: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

std::vector<ScoredTrial> score_trials(const std::vector<Trial>& trials, const EmbeddingStore& store,
                                      const std::vector<std::string>& cohort_ids, std::size_t top_k) {
  std::unordered_map<std::string, CohortStats> cache;
  auto stats_for = [&](const std::string& id) -> const CohortStats& {
    auto it = cache.find(id);
    if (it != cache.end()) return it->second;
    const auto& e = store.get(id);
    std::vector<double> sc;
    sc.reserve(cohort_ids.size());
    for (const std::string& c : cohort_ids) {
      if (c == id) continue;
      sc.push_back(cosine_score(std::span<const float>(e), std::span<const float>(store.get(c))));
    }
    const CohortStats st = top_k_stats(std::move(sc), top_k);
    if (st.std == 0.0) throw DataError("s-norm: degenerate cohort (zero spread) for " + id);
    return cache.emplace(id, st).first->second;
  };
  std::vector<ScoredTrial> out;
  out.reserve(trials.size());
  for (const Trial& t : trials) {
    ScoredTrial s;
    s.trial = t;
    s.raw = cosine_score(std::span<const float>(store.get(t.enroll)), std::span<const float>(store.get(t.test)));
    s.snorm = s.raw;
    if (!cohort_ids.empty()) {
      const CohortStats& e = stats_for(t.enroll);
      const CohortStats& v = stats_for(t.test);
      s.snorm = 0.5 * ((s.raw - e.mean) / e.std + (s.raw - v.mean) / v.std);
    }
    s.calibrated = s.snorm;
    out.push_back(std::move(s));
  }
  return out;
}

void write_quality(const std::string& path, const QualityTable& table) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("quality: cannot write " + path);
  char buf[96];
  for (const auto& [id, q] : table) {
    std::snprintf(buf, sizeof(buf), " %.6f %.6f\n", q.duration, q.snr_db);
    f << id << buf;
  }
  if (!f) throw DataError("quality: write failed for " + path);
}

QualityTable read_quality(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("quality: cannot open " + path);
  QualityTable table;
  int lineno = 0;
  for (std::string line; std::getline(f, line);) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string id, extra;
    UtteranceQuality q;
    if (!(ls >> id >> q.duration >> q.snr_db) || (ls >> extra) || !std::isfinite(q.duration) ||
        !std::isfinite(q.snr_db)) {
      throw ParseError("quality line " + std::to_string(lineno) + ": expected 'id duration snr_db'", lineno);
    }
    table[id] = q;
  }
  return table;
}

QualityFeatures trial_quality(const Trial& trial, const EmbeddingStore& store, const QualityTable& table) {
  auto lookup = [&](const std::string& id) -> const UtteranceQuality& {
    auto it = table.find(id);
    if (it == table.end()) throw DataError("missing quality record for id '" + id + "'");
    return it->second;
  };
  auto norm = [&](const std::string& id) {
    double s = 0.0;
    for (float v : store.get(id)) s += static_cast<double>(v) * static_cast<double>(v);
    return std::sqrt(s);
  };
  const UtteranceQuality& e = lookup(trial.enroll);
  const UtteranceQuality& t = lookup(trial.test);
  return {e.duration, t.duration, e.snr_db, t.snr_db, norm(trial.enroll), norm(trial.test)};
}

void write_scores(const std::string& path, const std::vector<ScoredTrial>& scored, ScoreKind kind) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("scores: cannot write " + path);
  char buf[64];
  for (const ScoredTrial& s : scored) {
    const double v = kind == ScoreKind::kRaw ? s.raw : kind == ScoreKind::kSnorm ? s.snorm : s.calibrated;
    std::snprintf(buf, sizeof(buf), "%.10f", v);
    f << s.trial.enroll << ' ' << s.trial.test << ' ' << buf << '\n';
  }
  if (!f) throw DataError("scores: write failed for " + path);
}

}  // namespace confsv
