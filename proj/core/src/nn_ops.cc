// core/src/nn_ops.cc

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

#include "confsv/nn_ops.h"

#include <algorithm>
#include <cmath>

#include "confsv/error.h"
#include "gemm.h"

namespace confsv {

namespace {

std::size_t last_dim(const Var& x, const char* op) {
  if (x.shape().empty() || x.shape().back() == 0) {
    throw DimensionError(std::string(op) + ": empty last axis in " + shape_str(x.shape()));
  }
  return x.shape().back();
}

}  // namespace

std::size_t conv_out_length(std::size_t n, std::size_t kernel, std::size_t stride,
                            std::size_t padding) {
  if (stride == 0 || kernel == 0) throw DimensionError("conv: zero kernel or stride");
  if (n + 2 * padding < kernel) {
    throw DimensionError("conv: input length " + std::to_string(n) +
                         " too short for kernel " + std::to_string(kernel) +
                         " with padding " + std::to_string(padding));
  }
  return (n + 2 * padding - kernel) / stride + 1;
}

Var matmul(const Var& a, const Var& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  const double* A = a.value().data().data();
  const double* B = b.value().data().data();
  double* Y = out.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B + p * n;
      double* yrow = Y + i * n;
      for (std::size_t j = 0; j < n; ++j) yrow[j] += av * brow[j];
    }
  return make_op("matmul", std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* G = self.grad.data().data();
    if (pa.requires_grad) {
      double* GA = pa.grad_buffer().data().data();
      const double* B = pb.value.data().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
          GA[i * k + p] += acc;
        }
    }
    if (pb.requires_grad) {
      double* GB = pb.grad_buffer().data().data();
      const double* A = pa.value.data().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) GB[p * n + j] += av * G[i * n + j];
        }
    }
  });
}

Var bmm(const Var& a, const Var& b, bool transpose_b) {
  if (a.shape().size() != 3 || b.shape().size() != 3 || a.dim(0) != b.dim(0)) {
    throw DimensionError("bmm: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t N = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  if ((transpose_b ? b.dim(2) : b.dim(1)) != k) {
    throw DimensionError("bmm: inner dims " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor out({N, m, n});
  const double* A = a.value().data().data();
  const double* B = b.value().data().data();
  double* Y = out.data().data();
  for (std::size_t t = 0; t < N; ++t) {
    const double* At = A + t * m * k;
    const double* Bt = B + t * k * n;
    double* Yt = Y + t * m * n;
    if (transpose_b) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t p = 0; p < k; ++p) acc += At[i * k + p] * Bt[j * k + p];
          Yt[i * n + j] = acc;
        }
    } else {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = At[i * k + p];
          for (std::size_t j = 0; j < n; ++j) Yt[i * n + j] += av * Bt[p * n + j];
        }
    }
  }
  return make_op("bmm", std::move(out), {a, b}, [N, m, k, n, transpose_b](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* G = self.grad.data().data();
    const double* A = pa.value.data().data();
    const double* B = pb.value.data().data();
    double* GA = pa.requires_grad ? pa.grad_buffer().data().data() : nullptr;
    double* GB = pb.requires_grad ? pb.grad_buffer().data().data() : nullptr;
    for (std::size_t t = 0; t < N; ++t) {
      const double* Gt = G + t * m * n;
      const double* At = A + t * m * k;
      const double* Bt = B + t * k * n;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = Gt[i * n + j];
          if (g == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) {
            const double bv = transpose_b ? Bt[j * k + p] : Bt[p * n + j];
            if (GA) GA[t * m * k + i * k + p] += g * bv;
            if (GB) {
              const std::size_t bi = transpose_b ? j * k + p : p * n + j;
              GB[t * k * n + bi] += g * At[i * k + p];
            }
          }
        }
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var* bias) {
  if (weight.shape().size() != 2) throw DimensionError("linear: weight must be 2-D");
  const std::size_t out_dim = weight.dim(0), in_dim = weight.dim(1);
  if (x.shape().empty() || x.shape().back() != in_dim) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(weight.shape()));
  }
  if (bias && bias->numel() != out_dim) throw DimensionError("linear: bias size");
  const std::size_t rows = x.numel() / in_dim;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  Tensor out(out_shape);
  const double* X = x.value().data().data();
  const double* W = weight.value().data().data();
  double* Y = out.data().data();
  const double* Bv = bias ? bias->value().data().data() : nullptr;
  std::vector<double> wt(in_dim * out_dim);
  detail::transpose(out_dim, in_dim, W, wt.data());
  if (Bv)
    for (std::size_t r = 0; r < rows; ++r) std::copy(Bv, Bv + out_dim, Y + r * out_dim);
  detail::gemm_nn(rows, in_dim, out_dim, X, wt.data(), Y);
  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(*bias);
  return make_op("linear", std::move(out), std::move(parents),
                 [rows, in_dim, out_dim](Node& self) {
                   Node& px = *self.parents[0];
                   Node& pw = *self.parents[1];
                   const double* G = self.grad.data().data();
                   if (px.requires_grad) {
                     double* GX = px.grad_buffer().data().data();
                     const double* W = pw.value.data().data();
                     for (std::size_t r = 0; r < rows; ++r) {
                       double* gx = GX + r * in_dim;
                       for (std::size_t o = 0; o < out_dim; ++o) {
                         const double g = G[r * out_dim + o];
                         if (g == 0.0) continue;
                         const double* wo = W + o * in_dim;
                         for (std::size_t i = 0; i < in_dim; ++i) gx[i] += g * wo[i];
                       }
                     }
                   }
                   if (pw.requires_grad) {
                     double* GW = pw.grad_buffer().data().data();
                     const double* X = px.value.data().data();
                     for (std::size_t r = 0; r < rows; ++r) {
                       const double* xr = X + r * in_dim;
                       for (std::size_t o = 0; o < out_dim; ++o) {
                         const double g = G[r * out_dim + o];
                         if (g == 0.0) continue;
                         double* gw = GW + o * in_dim;
                         for (std::size_t i = 0; i < in_dim; ++i) gw[i] += g * xr[i];
                       }
                     }
                   }
                   if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
                     double* GB = self.parents[2]->grad_buffer().data().data();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t o = 0; o < out_dim; ++o) GB[o] += G[r * out_dim + o];
                   }
                 });
}

Var softmax(const Var& x) {
  const std::size_t n = last_dim(x, "softmax");
  const std::size_t rows = x.numel() / n;
  Tensor out(x.shape());
  const double* X = x.value().data().data();
  double* Y = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X + r * n;
    double* yr = Y + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += (yr[i] = std::exp(xr[i] - mx));
    for (std::size_t i = 0; i < n; ++i) yr[i] /= z;
  }
  return make_op("softmax", std::move(out), {x}, [rows, n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    double* GX = p.grad_buffer().data().data();
    const double* Y = self.value.data().data();
    const double* G = self.grad.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += G[r * n + i] * Y[r * n + i];
      for (std::size_t i = 0; i < n; ++i)
        GX[r * n + i] += Y[r * n + i] * (G[r * n + i] - dot);
    }
  });
}

Var log_softmax(const Var& x) {
  const std::size_t n = last_dim(x, "log_softmax");
  const std::size_t rows = x.numel() / n;
  Tensor out(x.shape());
  const double* X = x.value().data().data();
  double* Y = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(xr[i] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t i = 0; i < n; ++i) Y[r * n + i] = xr[i] - lse;
  }
  return make_op("log_softmax", std::move(out), {x}, [rows, n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    double* GX = p.grad_buffer().data().data();
    const double* Y = self.value.data().data();
    const double* G = self.grad.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t i = 0; i < n; ++i) gs += G[r * n + i];
      for (std::size_t i = 0; i < n; ++i)
        GX[r * n + i] += G[r * n + i] - std::exp(Y[r * n + i]) * gs;
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const std::size_t d = last_dim(x, "layer_norm");
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: affine size " + std::to_string(gamma.numel()) +
                         " vs feature size " + std::to_string(d));
  }
  const std::size_t rows = x.numel() / d;
  Tensor out(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> rstd(rows);
  const double* X = x.value().data().data();
  const double* Gm = gamma.value().data().data();
  const double* Bt = beta.value().data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += xr[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      const double h = (xr[i] - mu) * rstd[r];
      xhat[r * d + i] = h;
      out[r * d + i] = h * Gm[i] + Bt[i];
    }
  }
  return make_op("layer_norm", std::move(out), {x, gamma, beta},
                 [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                   Node& px = *self.parents[0];
                   Node& pg = *self.parents[1];
                   Node& pb = *self.parents[2];
                   const double* G = self.grad.data().data();
                   const double* H = xhat.data().data();
                   if (pg.requires_grad) {
                     double* GG = pg.grad_buffer().data().data();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t i = 0; i < d; ++i) GG[i] += G[r * d + i] * H[r * d + i];
                   }
                   if (pb.requires_grad) {
                     double* GB = pb.grad_buffer().data().data();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t i = 0; i < d; ++i) GB[i] += G[r * d + i];
                   }
                   if (px.requires_grad) {
                     double* GX = px.grad_buffer().data().data();
                     const double* Gm = pg.value.data().data();
                     const double inv_d = 1.0 / static_cast<double>(d);
                     for (std::size_t r = 0; r < rows; ++r) {
                       double m1 = 0.0, m2 = 0.0;
                       for (std::size_t i = 0; i < d; ++i) {
                         const double gh = G[r * d + i] * Gm[i];
                         m1 += gh;
                         m2 += gh * H[r * d + i];
                       }
                       m1 *= inv_d;
                       m2 *= inv_d;
                       for (std::size_t i = 0; i < d; ++i) {
                         const double gh = G[r * d + i] * Gm[i];
                         GX[r * d + i] += rstd[r] * (gh - m1 - H[r * d + i] * m2);
                       }
                     }
                   }
                 });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormStats& running,
               bool training, double momentum, double eps) {
  const std::size_t c = last_dim(x, "batch_norm");
  if (gamma.numel() != c || beta.numel() != c || running.mean.numel() != c ||
      running.var.numel() != c) {
    throw DimensionError("batch_norm: channel count mismatch for " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / c;
  const double* X = x.value().data().data();
  const double* Gm = gamma.value().data().data();
  const double* Bt = beta.value().data().data();
  std::vector<double> mu(c, 0.0), rstd(c, 0.0);
  if (training) {
    std::vector<double> var(c, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < c; ++i) mu[i] += X[r * c + i];
    for (std::size_t i = 0; i < c; ++i) mu[i] /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < c; ++i) {
        const double dlt = X[r * c + i] - mu[i];
        var[i] += dlt * dlt;
      }
    for (std::size_t i = 0; i < c; ++i) {
      var[i] /= static_cast<double>(rows);
      rstd[i] = 1.0 / std::sqrt(var[i] + eps);
      const double unbiased =
          rows > 1 ? var[i] * static_cast<double>(rows) / static_cast<double>(rows - 1)
                   : var[i];
      running.mean[i] = (1.0 - momentum) * running.mean[i] + momentum * mu[i];
      running.var[i] = (1.0 - momentum) * running.var[i] + momentum * unbiased;
    }
  } else {
    for (std::size_t i = 0; i < c; ++i) {
      mu[i] = running.mean[i];
      rstd[i] = 1.0 / std::sqrt(running.var[i] + eps);
    }
  }
  Tensor out(x.shape());
  Tensor xhat(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < c; ++i) {
      const double h = (X[r * c + i] - mu[i]) * rstd[i];
      xhat[r * c + i] = h;
      out[r * c + i] = h * Gm[i] + Bt[i];
    }
  return make_op("batch_norm", std::move(out), {x, gamma, beta},
                 [rows, c, training, xhat = std::move(xhat),
                  rstd = std::move(rstd)](Node& self) {
                   Node& px = *self.parents[0];
                   Node& pg = *self.parents[1];
                   Node& pb = *self.parents[2];
                   const double* G = self.grad.data().data();
                   const double* H = xhat.data().data();
                   std::vector<double> sg(c, 0.0), sgh(c, 0.0);
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t i = 0; i < c; ++i) {
                       sg[i] += G[r * c + i];
                       sgh[i] += G[r * c + i] * H[r * c + i];
                     }
                   if (pg.requires_grad) {
                     double* GG = pg.grad_buffer().data().data();
                     for (std::size_t i = 0; i < c; ++i) GG[i] += sgh[i];
                   }
                   if (pb.requires_grad) {
                     double* GB = pb.grad_buffer().data().data();
                     for (std::size_t i = 0; i < c; ++i) GB[i] += sg[i];
                   }
                   if (px.requires_grad) {
                     double* GX = px.grad_buffer().data().data();
                     const double* Gm = pg.value.data().data();
                     const double inv_n = 1.0 / static_cast<double>(rows);
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t i = 0; i < c; ++i) {
                         const double g = G[r * c + i];
                         GX[r * c + i] +=
                             training ? Gm[i] * rstd[i] *
                                            (g - sg[i] * inv_n - H[r * c + i] * sgh[i] * inv_n)
                                      : Gm[i] * rstd[i] * g;
                       }
                   }
                 });
}

Var glu(const Var& x) {
  const std::size_t n = last_dim(x, "glu");
  if (n % 2 != 0) throw DimensionError("glu: odd channel count " + std::to_string(n));
  const std::size_t h = n / 2;
  const std::size_t rows = x.numel() / n;
  Shape out_shape = x.shape();
  out_shape.back() = h;
  Tensor out(out_shape);
  Tensor gate({rows, h});
  const double* X = x.value().data().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < h; ++i) {
      const double b = X[r * n + h + i];
      const double s = b >= 0 ? 1.0 / (1.0 + std::exp(-b)) : std::exp(b) / (1.0 + std::exp(b));
      gate[r * h + i] = s;
      out[r * h + i] = X[r * n + i] * s;
    }
  return make_op("glu", std::move(out), {x}, [rows, n, h, gate = std::move(gate)](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    double* GX = p.grad_buffer().data().data();
    const double* X = p.value.data().data();
    const double* G = self.grad.data().data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < h; ++i) {
        const double s = gate[r * h + i];
        const double g = G[r * h + i];
        GX[r * n + i] += g * s;
        GX[r * n + h + i] += g * X[r * n + i] * s * (1.0 - s);
      }
  });
}

Var dropout(const Var& x, double rate, Rng* rng, bool training) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
  if (!rng) throw ContractError("dropout in training mode needs an rng");
  const double keep = 1.0 - rate;
  Tensor mask(x.shape());
  for (double& m : mask.storage()) m = rng->uniform() < keep ? 1.0 / keep : 0.0;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
  return make_op("dropout", std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer().storage();
    const auto& gy = self.grad.storage();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * mask[i];
  });
}

namespace {

struct Conv2dGeom {
  std::size_t Ci, H, W, KH, KW, Ho, Wo, stride, padding;
  std::size_t positions() const { return Ho * Wo; }
  std::size_t patch() const { return Ci * KH * KW; }
};

// Patch matrix [Ho*Wo, Ci*KH*KW] for one image, zeros in the padding.
void im2row(const Conv2dGeom& g, const double* x, double* rows) {
  const std::size_t P = g.patch();
  for (std::size_t i = 0; i < g.Ho; ++i)
    for (std::size_t j = 0; j < g.Wo; ++j) {
      double* r = rows + (i * g.Wo + j) * P;
      for (std::size_t ci = 0; ci < g.Ci; ++ci)
        for (std::size_t u = 0; u < g.KH; ++u) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(i * g.stride + u) -
                                   static_cast<std::ptrdiff_t>(g.padding);
          for (std::size_t v = 0; v < g.KW; ++v, ++r) {
            const std::ptrdiff_t xc = static_cast<std::ptrdiff_t>(j * g.stride + v) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            const bool inside = y >= 0 && y < static_cast<std::ptrdiff_t>(g.H) && xc >= 0 &&
                                xc < static_cast<std::ptrdiff_t>(g.W);
            *r = inside ? x[(ci * g.H + static_cast<std::size_t>(y)) * g.W + static_cast<std::size_t>(xc)] : 0.0;
          }
        }
    }
}

// Adjoint of im2row: scatters patch gradients back into the image gradient.
void row2im(const Conv2dGeom& g, const double* rows, double* gx) {
  const std::size_t P = g.patch();
  for (std::size_t i = 0; i < g.Ho; ++i)
    for (std::size_t j = 0; j < g.Wo; ++j) {
      const double* r = rows + (i * g.Wo + j) * P;
      for (std::size_t ci = 0; ci < g.Ci; ++ci)
        for (std::size_t u = 0; u < g.KH; ++u) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(i * g.stride + u) -
                                   static_cast<std::ptrdiff_t>(g.padding);
          for (std::size_t v = 0; v < g.KW; ++v, ++r) {
            const std::ptrdiff_t xc = static_cast<std::ptrdiff_t>(j * g.stride + v) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            if (y >= 0 && y < static_cast<std::ptrdiff_t>(g.H) && xc >= 0 &&
                xc < static_cast<std::ptrdiff_t>(g.W)) {
              gx[(ci * g.H + static_cast<std::size_t>(y)) * g.W + static_cast<std::size_t>(xc)] += *r;
            }
          }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var* bias, std::size_t stride,
           std::size_t padding) {
  if (x.shape().size() != 4 || weight.shape().size() != 4 || x.dim(1) != weight.dim(1)) {
    throw DimensionError("conv2d: input " + shape_str(x.shape()) + " weight " +
                         shape_str(weight.shape()));
  }
  if (bias && bias->numel() != weight.dim(0)) throw DimensionError("conv2d: bias size");
  const std::size_t B = x.dim(0), Co = weight.dim(0);
  Conv2dGeom g{x.dim(1), x.dim(2), x.dim(3), weight.dim(2), weight.dim(3), 0, 0, stride, padding};
  g.Ho = conv_out_length(g.H, g.KH, stride, padding);
  g.Wo = conv_out_length(g.W, g.KW, stride, padding);
  const std::size_t N = g.positions(), P = g.patch();
  Tensor out({B, Co, g.Ho, g.Wo});
  const double* X = x.value().data().data();
  double* Y = out.data().data();
  const double* Bv = bias ? bias->value().data().data() : nullptr;
  std::vector<double> wt(P * Co), rows(N * P), yt(N * Co);
  detail::transpose(Co, P, weight.value().data().data(), wt.data());
  for (std::size_t b = 0; b < B; ++b) {
    im2row(g, X + b * g.Ci * g.H * g.W, rows.data());
    std::fill(yt.begin(), yt.end(), 0.0);
    detail::gemm_nn(N, P, Co, rows.data(), wt.data(), yt.data());
    double* yb = Y + b * Co * N;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t co = 0; co < Co; ++co) yb[co * N + n] = yt[n * Co + co] + (Bv ? Bv[co] : 0.0);
  }
  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(*bias);
  return make_op("conv2d", std::move(out), std::move(parents), [B, Co, g](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    const std::size_t N = g.positions(), P = g.patch();
    const double* G = self.grad.data().data();
    const double* X = px.value.data().data();
    double* GX = px.requires_grad ? px.grad_buffer().data().data() : nullptr;
    double* GW = pw.requires_grad ? pw.grad_buffer().data().data() : nullptr;
    std::vector<double> rows(N * P), gt(N * Co), grows(GX ? N * P : 0), gwt(GW ? P * Co : 0);
    for (std::size_t b = 0; b < B; ++b) {
      detail::transpose(Co, N, G + b * Co * N, gt.data());
      if (GW) {
        im2row(g, X + b * g.Ci * g.H * g.W, rows.data());
        detail::gemm_tn(N, P, Co, rows.data(), gt.data(), gwt.data());
      }
      if (GX) {
        std::fill(grows.begin(), grows.end(), 0.0);
        detail::gemm_nn(N, Co, P, gt.data(), pw.value.data().data(), grows.data());
        row2im(g, grows.data(), GX + b * g.Ci * g.H * g.W);
      }
    }
    if (GW)
      for (std::size_t q = 0; q < P; ++q)
        for (std::size_t co = 0; co < Co; ++co) GW[co * P + q] += gwt[q * Co + co];
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      double* GB = self.parents[2]->grad_buffer().data().data();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t co = 0; co < Co; ++co) {
          const double* gp = G + (b * Co + co) * N;
          double acc = 0.0;
          for (std::size_t i = 0; i < N; ++i) acc += gp[i];
          GB[co] += acc;
        }
    }
  });
}

Var conv1d(const Var& x, const Var& weight, const Var* bias, std::size_t stride,
           std::size_t padding) {
  if (x.shape().size() != 3 || weight.shape().size() != 3 || x.dim(2) != weight.dim(1)) {
    throw DimensionError("conv1d: input " + shape_str(x.shape()) + " weight " +
                         shape_str(weight.shape()));
  }
  const std::size_t B = x.dim(0), T = x.dim(1), Ci = x.dim(2);
  const std::size_t Co = weight.dim(0), K = weight.dim(2);
  const std::size_t To = conv_out_length(T, K, stride, padding);
  // Re-layout weights as [K][Co][Ci] so the inner loop is contiguous.
  std::vector<double> wk(K * Co * Ci);
  const double* Wt = weight.value().data().data();
  for (std::size_t co = 0; co < Co; ++co)
    for (std::size_t ci = 0; ci < Ci; ++ci)
      for (std::size_t u = 0; u < K; ++u) wk[(u * Co + co) * Ci + ci] = Wt[(co * Ci + ci) * K + u];
  Tensor out({B, To, Co});
  const double* X = x.value().data().data();
  double* Y = out.data().data();
  const double* Bv = bias ? bias->value().data().data() : nullptr;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < To; ++t) {
      double* yr = Y + (b * To + t) * Co;
      for (std::size_t co = 0; co < Co; ++co) yr[co] = Bv ? Bv[co] : 0.0;
      for (std::size_t u = 0; u < K; ++u) {
        const std::size_t pos = t * stride + u;
        if (pos < padding || pos - padding >= T) continue;
        const double* xr = X + (b * T + pos - padding) * Ci;
        for (std::size_t co = 0; co < Co; ++co) {
          const double* w = &wk[(u * Co + co) * Ci];
          double acc = 0.0;
          for (std::size_t ci = 0; ci < Ci; ++ci) acc += w[ci] * xr[ci];
          yr[co] += acc;
        }
      }
    }
  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(*bias);
  return make_op(
      "conv1d", std::move(out), std::move(parents),
      [B, T, Ci, Co, K, To, stride, padding, wk = std::move(wk)](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        const double* G = self.grad.data().data();
        const double* X = px.value.data().data();
        double* GX = px.requires_grad ? px.grad_buffer().data().data() : nullptr;
        double* GW = pw.requires_grad ? pw.grad_buffer().data().data() : nullptr;
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t t = 0; t < To; ++t) {
            const double* gr = G + (b * To + t) * Co;
            for (std::size_t u = 0; u < K; ++u) {
              const std::size_t pos = t * stride + u;
              if (pos < padding || pos - padding >= T) continue;
              const std::size_t xoff = (b * T + pos - padding) * Ci;
              for (std::size_t co = 0; co < Co; ++co) {
                const double g = gr[co];
                if (g == 0.0) continue;
                if (GX) {
                  const double* w = &wk[(u * Co + co) * Ci];
                  for (std::size_t ci = 0; ci < Ci; ++ci) GX[xoff + ci] += g * w[ci];
                }
                if (GW) {
                  for (std::size_t ci = 0; ci < Ci; ++ci)
                    GW[(co * Ci + ci) * K + u] += g * X[xoff + ci];
                }
              }
            }
          }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          double* GB = self.parents[2]->grad_buffer().data().data();
          for (std::size_t r = 0; r < B * To; ++r)
            for (std::size_t co = 0; co < Co; ++co) GB[co] += G[r * Co + co];
        }
      });
}

Var depthwise_conv1d(const Var& x, const Var& weight, const Var* bias, std::size_t padding) {
  if (x.shape().size() != 3 || weight.shape().size() != 2 || weight.dim(0) != x.dim(2)) {
    throw DimensionError("depthwise_conv1d: input " + shape_str(x.shape()) + " weight " +
                         shape_str(weight.shape()));
  }
  const std::size_t B = x.dim(0), T = x.dim(1), C = x.dim(2), K = weight.dim(1);
  const std::size_t To = conv_out_length(T, K, 1, padding);
  Tensor out({B, To, C});
  const double* X = x.value().data().data();
  const double* Wt = weight.value().data().data();
  double* Y = out.data().data();
  const double* Bv = bias ? bias->value().data().data() : nullptr;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < To; ++t) {
      double* yr = Y + (b * To + t) * C;
      for (std::size_t c = 0; c < C; ++c) yr[c] = Bv ? Bv[c] : 0.0;
      for (std::size_t u = 0; u < K; ++u) {
        const std::size_t pos = t + u;
        if (pos < padding || pos - padding >= T) continue;
        const double* xr = X + (b * T + pos - padding) * C;
        for (std::size_t c = 0; c < C; ++c) yr[c] += Wt[c * K + u] * xr[c];
      }
    }
  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(*bias);
  return make_op("depthwise_conv1d", std::move(out), std::move(parents),
                 [B, T, C, K, To, padding](Node& self) {
                   Node& px = *self.parents[0];
                   Node& pw = *self.parents[1];
                   const double* G = self.grad.data().data();
                   const double* X = px.value.data().data();
                   const double* Wt = pw.value.data().data();
                   double* GX = px.requires_grad ? px.grad_buffer().data().data() : nullptr;
                   double* GW = pw.requires_grad ? pw.grad_buffer().data().data() : nullptr;
                   for (std::size_t b = 0; b < B; ++b)
                     for (std::size_t t = 0; t < To; ++t) {
                       const double* gr = G + (b * To + t) * C;
                       for (std::size_t u = 0; u < K; ++u) {
                         const std::size_t pos = t + u;
                         if (pos < padding || pos - padding >= T) continue;
                         const std::size_t xoff = (b * T + pos - padding) * C;
                         for (std::size_t c = 0; c < C; ++c) {
                           if (GX) GX[xoff + c] += gr[c] * Wt[c * K + u];
                           if (GW) GW[c * K + u] += gr[c] * X[xoff + c];
                         }
                       }
                     }
                   if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
                     double* GB = self.parents[2]->grad_buffer().data().data();
                     for (std::size_t r = 0; r < B * To; ++r)
                       for (std::size_t c = 0; c < C; ++c) GB[c] += G[r * C + c];
                   }
                 });
}

Var rel_shift(const Var& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("rel_shift: rank < 2");
  const std::size_t T = s[s.size() - 2], P = s.back();
  if (T == 0 || P != 2 * T - 1) {
    throw DimensionError("rel_shift: expected [..., T, 2T-1], got " + shape_str(s));
  }
  const std::size_t outer = x.numel() / (T * P);
  Shape out_shape = s;
  out_shape.back() = T;
  Tensor out(out_shape);
  const double* X = x.value().data().data();
  double* Y = out.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t j = 0; j < T; ++j)
        Y[(o * T + i) * T + j] = X[(o * T + i) * P + (T - 1 - i + j)];
  return make_op("rel_shift", std::move(out), {x}, [outer, T, P](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    double* GX = p.grad_buffer().data().data();
    const double* G = self.grad.data().data();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = 0; j < T; ++j)
          GX[(o * T + i) * P + (T - 1 - i + j)] += G[(o * T + i) * T + j];
  });
}

Var l2_normalize(const Var& x, double eps) {
  const std::size_t d = last_dim(x, "l2_normalize");
  const std::size_t rows = x.numel() / d;
  Tensor out(x.shape());
  std::vector<double> norms(rows);
  const double* X = x.value().data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t i = 0; i < d; ++i) ss += X[r * d + i] * X[r * d + i];
    norms[r] = std::max(std::sqrt(ss), eps);
    for (std::size_t i = 0; i < d; ++i) out[r * d + i] = X[r * d + i] / norms[r];
  }
  return make_op("l2_normalize", std::move(out), {x},
                 [rows, d, eps, norms = std::move(norms)](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   double* GX = p.grad_buffer().data().data();
                   const double* Y = self.value.data().data();
                   const double* G = self.grad.data().data();
                   for (std::size_t r = 0; r < rows; ++r) {
                     const double n = norms[r];
                     if (n <= eps) {
                       for (std::size_t i = 0; i < d; ++i) GX[r * d + i] += G[r * d + i] / n;
                       continue;
                     }
                     double dot = 0.0;
                     for (std::size_t i = 0; i < d; ++i) dot += G[r * d + i] * Y[r * d + i];
                     for (std::size_t i = 0; i < d; ++i)
                       GX[r * d + i] += (G[r * d + i] - Y[r * d + i] * dot) / n;
                   }
                 });
}

}  // namespace confsv
