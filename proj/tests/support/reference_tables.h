// tests/support/reference_tables.h

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

#ifndef CONFSV_TESTS_REFERENCE_TABLES_H_
#define CONFSV_TESTS_REFERENCE_TABLES_H_

// Reported model sizes and compute, in millions, used as fixed targets.

#include <string>
#include <vector>

namespace confsv::testing {

struct ModelSize {
  std::string preset;
  double params_m;
  double macs_m;  // 5 s input
};

inline const std::vector<ModelSize>& reported_model_sizes() {
  static const std::vector<ModelSize> t{
      {"small", 15.88, 1120.0},      {"medium", 35.26, 2310.0},     {"large", 130.94, 8530.0},
      {"half_small", 8.73, 405.18},  {"half_medium", 19.30, 803.04}, {"half_large", 72.16, 2520.0},
  };
  return t;
}

// Backbone size when only the first L blocks are kept.
struct TruncatedSize {
  std::string preset;
  std::size_t layers;
  double params_m;
};

inline const std::vector<TruncatedSize>& reported_truncated_sizes() {
  static const std::vector<TruncatedSize> t{
      {"small", 4, 3.92},   {"small", 8, 6.94},    {"small", 12, 9.95},
      {"medium", 6, 11.44}, {"medium", 10, 17.79}, {"medium", 14, 24.15},
      {"large", 6, 45.55},  {"large", 10, 70.85},  {"large", 14, 96.14},
  };
  return t;
}

struct AdaptationCell {
  std::string preset;
  std::string variant;
  std::size_t layers;
  std::size_t light_layers;
  double params_m;
  // The medium V2 rows for L=10 and L=14 repeat the V1 rows verbatim and
  // disagree with the V2 L=6 row and with both other backbones.
  bool duplicated_entry = false;
};

inline std::vector<AdaptationCell> reported_adaptation_sizes() {
  std::vector<AdaptationCell> cells;
  auto row = [&](const std::string& p, const std::string& v, std::size_t L, double k0, double k2, double k4) {
    if (k0 > 0) cells.push_back({p, v, L, 0, k0});
    cells.push_back({p, v, L, 2, k2});
    cells.push_back({p, v, L, 4, k4});
  };
  row("small", "V1", 4, 0.73, 2.60, 4.47);
  row("small", "V1", 8, 1.45, 3.32, 5.20);
  row("small", "V1", 12, 2.18, 4.05, 5.92);
  row("small", "V2", 4, 0.69, 2.56, 4.43);
  row("small", "V2", 8, 1.37, 3.24, 5.12);
  row("small", "V2", 12, 2.06, 3.93, 5.80);
  row("small", "V3", 4, 0, 2.68, 4.55);
  row("small", "V3", 8, 0, 3.49, 5.36);
  row("small", "V3", 12, 0, 4.30, 6.17);
  row("medium", "V1", 6, 1.63, 3.50, 5.37);
  row("medium", "V1", 10, 2.69, 4.56, 6.43);
  row("medium", "V1", 14, 3.74, 5.61, 7.48);
  row("medium", "V2", 6, 1.14, 3.01, 4.88);
  row("medium", "V2", 10, 2.69, 4.56, 6.43);
  row("medium", "V2", 14, 3.74, 5.61, 7.48);
  row("medium", "V3", 6, 0, 3.23, 5.10);
  row("medium", "V3", 10, 0, 4.14, 6.01);
  row("medium", "V3", 14, 0, 5.05, 6.92);
  row("large", "V1", 6, 3.26, 5.13, 7.00);
  row("large", "V1", 10, 5.37, 7.24, 9.11);
  row("large", "V1", 14, 7.48, 9.35, 11.23);
  row("large", "V2", 6, 1.38, 3.25, 5.12);
  row("large", "V2", 10, 2.23, 4.11, 5.98);
  row("large", "V2", 14, 3.09, 4.96, 6.84);
  row("large", "V3", 6, 0, 3.70, 5.57);
  row("large", "V3", 10, 0, 4.92, 6.79);
  row("large", "V3", 14, 0, 6.14, 8.01);
  for (auto& c : cells)
    if (c.preset == "medium" && c.variant == "V2" && c.layers > 6) c.duplicated_entry = true;
  return cells;
}

}  // namespace confsv::testing

#endif  // CONFSV_TESTS_REFERENCE_TABLES_H_
