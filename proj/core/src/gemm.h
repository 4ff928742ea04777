// core/src/gemm.h

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

#ifndef CONFSV_SRC_GEMM_H_
#define CONFSV_SRC_GEMM_H_

#include <cstddef>

namespace confsv::detail {

// C[m,n] += A[m,k] * B[k,n], all row-major.
inline void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* A, const double* B,
                    double* C) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c = C + i * n;
    const double* a = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p];
      if (av == 0.0) continue;
      const double* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n].
inline void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* A, const double* B,
                    double* C) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    const double* b = B + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p];
      if (av == 0.0) continue;
      double* c = C + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// out[c,r] = in[r,c] for an r x c matrix.
inline void transpose(std::size_t r, std::size_t c, const double* in, double* out) {
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
}

}  // namespace confsv::detail

#endif  // CONFSV_SRC_GEMM_H_
