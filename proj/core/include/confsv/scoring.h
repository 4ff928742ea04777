// core/include/confsv/scoring.h

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

#ifndef CONFSV_SCORING_H_
#define CONFSV_SCORING_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace confsv {

// Inner product of the L2-normalized vectors. Throws DataError for a zero
// vector and DimensionError for a length mismatch.
double cosine_score(std::span<const double> a, std::span<const double> b);
double cosine_score(std::span<const float> a, std::span<const float> b);

// s' = ((s - mu_e)/sd_e + (s - mu_t)/sd_t) / 2, with mean and population std
// of the top_k highest scores of each cohort. Throws DataError when a
// standard deviation is zero, ConfigError unless cohort size >= top_k >= 2.
double adapted_snorm(double raw, std::vector<double> enroll_cohort,
                     std::vector<double> test_cohort, std::size_t top_k);

// Cohort statistics for one embedding: mean and std of its top-k scores.
struct CohortStats {
  double mean = 0.0;
  double std = 0.0;
};
CohortStats top_k_stats(std::vector<double> scores, std::size_t top_k);

struct Trial {
  bool target = false;
  std::string enroll;
  std::string test;
};
// "label enroll test" per line, label 1 (target) or 0 (nontarget). Blank
// lines are skipped; other malformed lines throw ParseError naming the line.
std::vector<Trial> parse_trials(const std::string& path);
std::vector<Trial> parse_trials_text(const std::string& text);
void write_trials(const std::string& path, const std::vector<Trial>& trials);

// Equal error rate in percent. Thresholds are the sorted unique scores (a
// trial is accepted when score >= threshold) plus +inf; between the two
// adjacent thresholds where FAR - FRR changes sign the rates are linearly
// interpolated. Throws DataError unless both classes are present.
double eer(const std::vector<double>& scores, const std::vector<bool>& labels);

// Minimum over thresholds (unique scores and +inf) of
// (c_miss*P_miss*p_t + c_fa*P_fa*(1-p_t)) / min(c_miss*p_t, c_fa*(1-p_t)).
double min_dcf(const std::vector<double>& scores, const std::vector<bool>& labels,
               double p_target = 0.01, double c_miss = 1.0, double c_fa = 1.0);

struct QualityFeatures {
  double duration_enroll = 0.0;  // seconds
  double duration_test = 0.0;
  double snr_enroll = 0.0;  // dB
  double snr_test = 0.0;
  double magnitude_enroll = 0.0;  // embedding L2 norm
  double magnitude_test = 0.0;
};

struct QmfTrial {
  double score = 0.0;
  QualityFeatures quality;
  bool target = false;
};

struct QmfOptions {
  bool use_quality = true;  // false fits on the score alone
  double tolerance = 1e-8;  // stop when the loss changes by less than this
  std::size_t max_iterations = 100000;
  double l2 = 1e-6;  // ridge on weights, keeps separable sets bounded
};

// Logistic model over standardized [score, 6 quality features].
struct QmfModel {
  bool use_quality = true;
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<double> weights;
  double bias = 0.0;
  std::size_t iterations = 0;
  double loss = 0.0;  // mean cross-entropy at the solution

  double apply(double score, const QualityFeatures& q) const;
  double score_weight() const { return weights.at(0) / scale.at(0); }
};

// Gradient descent with backtracking line search. Throws DataError unless
// both classes are present.
QmfModel qmf_fit(const std::vector<QmfTrial>& trials, const QmfOptions& opts = {});
double qmf_apply(const QmfModel& model, double score, const QualityFeatures& q);
// Mean binary cross-entropy of the model's calibrated scores.
double qmf_loss(const QmfModel& model, const std::vector<QmfTrial>& trials);

// 10*log10 of the ratio between the 90th and 10th percentile frame
// energies (20 ms frames, 10 ms shift).
double estimate_snr_db(const std::vector<double>& wave);

// Binary layout (little-endian): "CSEM" | u32 version | u64 count |
// u32 dim | entries: u32 id length | id | f32 values[dim].
inline constexpr std::uint32_t kEmbeddingStoreVersion = 1;
inline constexpr std::size_t kStoreDim = 256;

class EmbeddingStore {
 public:
  void add(const std::string& id, std::vector<float> values);
  bool contains(const std::string& id) const { return index_.count(id) > 0; }
  // Throws DataError for an unknown id.
  const std::vector<float>& get(const std::string& id) const;
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  void save(const std::string& path) const;
  static EmbeddingStore load(const std::string& path);
  std::string serialize() const;
  static EmbeddingStore deserialize(const std::string& bytes);

 private:
  std::vector<std::string> ids_;
  std::vector<std::vector<float>> values_;
  std::map<std::string, std::size_t> index_;
};

struct ScoredTrial {
  Trial trial;
  double raw = 0.0;
  double snorm = 0.0;
  double calibrated = 0.0;
};

// Cosine scores for all trials; with a non-empty cohort also adapted s-norm.
std::vector<ScoredTrial> score_trials(const std::vector<Trial>& trials,
                                      const EmbeddingStore& store,
                                      const std::vector<std::string>& cohort_ids = {},
                                      std::size_t top_k = 70);

// Per-utterance quality measures kept beside an embedding store.
struct UtteranceQuality {
  double duration = 0.0;  // seconds
  double snr_db = 0.0;
};
using QualityTable = std::map<std::string, UtteranceQuality>;
// "id duration snr_db" lines.
void write_quality(const std::string& path, const QualityTable& table);
QualityTable read_quality(const std::string& path);
// Durations and SNRs from the table, magnitudes from the stored embeddings.
QualityFeatures trial_quality(const Trial& trial, const EmbeddingStore& store,
                              const QualityTable& table);

enum class ScoreKind { kRaw, kSnorm, kCalibrated };
// "enroll test score" lines.
void write_scores(const std::string& path, const std::vector<ScoredTrial>& scored,
                  ScoreKind kind);

}  // namespace confsv

#endif  // CONFSV_SCORING_H_
