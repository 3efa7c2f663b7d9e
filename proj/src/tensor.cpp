#include "nner/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace nner {

namespace {

template <class Real>
constexpr Real prob_floor() {
  if constexpr (sizeof(Real) == 4) return Real(1e-7);
  return Real(1e-12);
}

template <class Real>
Real sigmoid_scalar(Real x) {
  return Real(1) / (Real(1) + std::exp(-x));
}

template <class Real>
Real softplus_scalar(Real x) {
  // log(1 + e^x) without overflow on either side
  if (x > Real(0)) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

int64_t rows_before_last(const Shape& s) {
  int64_t r = 1;
  for (size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

// Grid tensors may arrive as [n,n,c] (singleton) or [batch,n,n,c].
template <class Real>
void grid_dims(const Tensor<Real>& x, const Mask& mask, const char* op, int64_t* batch, int64_t* n,
               int64_t* ch) {
  if (x.rank() == 3) {
    *batch = 1;
    *n = x.dim(0);
    *ch = x.dim(2);
    if (x.dim(1) != *n) throw DimensionError(str(op, ": grid must be square, got ", shape_str(x.shape())));
  } else if (x.rank() == 4) {
    *batch = x.dim(0);
    *n = x.dim(1);
    *ch = x.dim(3);
    if (x.dim(2) != *n) throw DimensionError(str(op, ": grid must be square, got ", shape_str(x.shape())));
  } else {
    throw DimensionError(str(op, ": expected rank 3 or 4 grid, got ", shape_str(x.shape())));
  }
  if (mask.batch != *batch || mask.n != *n) {
    throw DimensionError(str(op, ": mask is ", mask.batch, "x", mask.n, "x", mask.n,
                             " but grid is ", shape_str(x.shape())));
  }
}

template <class Real>
void check_same_shape(const char* op, const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(
        str(op, ": shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
  }
}

}  // namespace

// ----------------------------------------------------------------- matmul

template <class Real>
Tensor<Real> matmul(Graph<Real>* g, const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() < 1 || b.rank() != 2 || a.dim(a.rank() - 1) != b.dim(0)) {
    throw DimensionError(
        str("matmul: cannot contract ", shape_str(a.shape()), " with ", shape_str(b.shape())));
  }
  const int64_t k = b.dim(0), p = b.dim(1);
  const int64_t m = a.numel() / std::max<int64_t>(k, 1);
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(p);
  Tensor<Real> out = Tensor<Real>::zeros(out_shape);

  const Real* ap = a.data();
  const Real* bp = b.data();
  Real* cp = out.data();
  for (int64_t r = 0; r < m; ++r) {
    const Real* ar = ap + r * k;
    Real* cr = cp + r * p;
    for (int64_t t = 0; t < k; ++t) {
      const Real av = ar[t];
      const Real* br = bp + t * p;
      for (int64_t j = 0; j < p; ++j) cr[j] += av * br[j];
    }
  }

  if (g) {
    g->record(out, [a, b, out, m, k, p]() mutable {
      if (!out.has_grad()) return;
      const Real* dc = out.grad().data();
      if (needs_grad(a)) {
        Real* da = a.grad().data();
        const Real* bp2 = b.data();
        for (int64_t r = 0; r < m; ++r) {
          const Real* dcr = dc + r * p;
          Real* dar = da + r * k;
          for (int64_t t = 0; t < k; ++t) {
            const Real* br = bp2 + t * p;
            Real s = 0;
            for (int64_t j = 0; j < p; ++j) s += dcr[j] * br[j];
            dar[t] += s;
          }
        }
      }
      if (needs_grad(b)) {
        Real* db = b.grad().data();
        const Real* ap2 = a.data();
        for (int64_t r = 0; r < m; ++r) {
          const Real* ar = ap2 + r * k;
          const Real* dcr = dc + r * p;
          for (int64_t t = 0; t < k; ++t) {
            const Real av = ar[t];
            Real* dbr = db + t * p;
            for (int64_t j = 0; j < p; ++j) dbr[j] += av * dcr[j];
          }
        }
      }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> matmul_nt(Graph<Real>* g, const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() < 1 || b.rank() != 2 || a.dim(a.rank() - 1) != b.dim(1)) {
    throw DimensionError(str("matmul_nt: cannot contract ", shape_str(a.shape()),
                             " with transposed ", shape_str(b.shape())));
  }
  const int64_t k = b.dim(1), p = b.dim(0);
  const int64_t m = a.numel() / std::max<int64_t>(k, 1);
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(p);
  Tensor<Real> out = Tensor<Real>::zeros(out_shape);

  const Real* ap = a.data();
  const Real* bp = b.data();
  Real* cp = out.data();
  for (int64_t r = 0; r < m; ++r) {
    const Real* ar = ap + r * k;
    Real* cr = cp + r * p;
    for (int64_t i = 0; i < p; ++i) {
      const Real* br = bp + i * k;
      Real s = 0;
      for (int64_t t = 0; t < k; ++t) s += ar[t] * br[t];
      cr[i] = s;
    }
  }

  if (g) {
    g->record(out, [a, b, out, m, k, p]() mutable {
      if (!out.has_grad()) return;
      const Real* dc = out.grad().data();
      if (needs_grad(a)) {
        Real* da = a.grad().data();
        const Real* bp2 = b.data();
        for (int64_t r = 0; r < m; ++r) {
          const Real* dcr = dc + r * p;
          Real* dar = da + r * k;
          for (int64_t i = 0; i < p; ++i) {
            const Real dv = dcr[i];
            const Real* br = bp2 + i * k;
            for (int64_t t = 0; t < k; ++t) dar[t] += dv * br[t];
          }
        }
      }
      if (needs_grad(b)) {
        Real* db = b.grad().data();
        const Real* ap2 = a.data();
        for (int64_t r = 0; r < m; ++r) {
          const Real* ar = ap2 + r * k;
          const Real* dcr = dc + r * p;
          for (int64_t i = 0; i < p; ++i) {
            const Real dv = dcr[i];
            Real* dbr = db + i * k;
            for (int64_t t = 0; t < k; ++t) dbr[t] += dv * ar[t];
          }
        }
      }
    });
  }
  return out;
}

// -------------------------------------------------------------------- add

template <class Real>
Tensor<Real> add(Graph<Real>* g, const Tensor<Real>& a, const Tensor<Real>& b) {
  check_same_shape("add", a, b);
  Tensor<Real> out = Tensor<Real>::zeros(a.shape());
  const Real* ap = a.data();
  const Real* bp = b.data();
  Real* op = out.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) op[i] = ap[i] + bp[i];

  if (g) {
    g->record(out, [a, b, out, n]() mutable {
      if (!out.has_grad()) return;
      const Real* dy = out.grad().data();
      if (needs_grad(a)) {
        Real* da = a.grad().data();
        for (int64_t i = 0; i < n; ++i) da[i] += dy[i];
      }
      if (needs_grad(b)) {
        Real* db = b.grad().data();
        for (int64_t i = 0; i < n; ++i) db[i] += dy[i];
      }
    });
  }
  return out;
}

// ------------------------------------------------------------- activation

template <class Real>
Tensor<Real> activation(Graph<Real>* g, const Tensor<Real>& x, Act kind, Real slope) {
  constexpr Real kInvSqrt2 = Real(0.70710678118654752440);
  constexpr Real kInvSqrt2Pi = Real(0.39894228040143267794);

  Tensor<Real> out = Tensor<Real>::zeros(x.shape());
  const Real* xp = x.data();
  Real* yp = out.data();
  const int64_t n = x.numel();
  switch (kind) {
    case Act::LeakyRelu:
      for (int64_t i = 0; i < n; ++i) yp[i] = xp[i] >= Real(0) ? xp[i] : slope * xp[i];
      break;
    case Act::Gelu:
      for (int64_t i = 0; i < n; ++i) {
        const Real v = xp[i];
        yp[i] = v * Real(0.5) * (Real(1) + std::erf(v * kInvSqrt2));
      }
      break;
    case Act::Sigmoid:
      for (int64_t i = 0; i < n; ++i) yp[i] = sigmoid_scalar(xp[i]);
      break;
  }

  if (g) {
    g->record(out, [x, out, kind, slope, n]() mutable {
      if (!out.has_grad() || !needs_grad(x)) return;
      const Real* dy = out.grad().data();
      const Real* xp2 = x.data();
      const Real* yp2 = out.data();
      Real* dx = x.grad().data();
      switch (kind) {
        case Act::LeakyRelu:
          for (int64_t i = 0; i < n; ++i) dx[i] += dy[i] * (xp2[i] >= Real(0) ? Real(1) : slope);
          break;
        case Act::Gelu:
          for (int64_t i = 0; i < n; ++i) {
            const Real v = xp2[i];
            const Real cdf = Real(0.5) * (Real(1) + std::erf(v * kInvSqrt2));
            const Real pdf = kInvSqrt2Pi * std::exp(Real(-0.5) * v * v);
            dx[i] += dy[i] * (cdf + v * pdf);
          }
          break;
        case Act::Sigmoid:
          for (int64_t i = 0; i < n; ++i) dx[i] += dy[i] * yp2[i] * (Real(1) - yp2[i]);
          break;
      }
    });
  }
  return out;
}

// --------------------------------------------------------------- layernorm

template <class Real>
Tensor<Real> layer_norm_feature(Graph<Real>* g, const Tensor<Real>& x, const Tensor<Real>& gamma,
                                const Tensor<Real>& beta, Real eps) {
  if (x.rank() < 1) throw DimensionError("layer_norm: scalar input");
  const int64_t c = x.dim(x.rank() - 1);
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError(str("layer_norm: feature dim ", c, " but gamma ",
                             shape_str(gamma.shape()), ", beta ", shape_str(beta.shape())));
  }
  if (eps <= Real(0)) throw ConfigError("layer_norm: eps must be positive");
  const int64_t rows = rows_before_last(x.shape());

  Tensor<Real> out = Tensor<Real>::zeros(x.shape());
  const Real* xp = x.data();
  const Real* gp = gamma.data();
  const Real* bp = beta.data();
  Real* yp = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const Real* xr = xp + r * c;
    Real* yr = yp + r * c;
    Real mean = 0;
    for (int64_t j = 0; j < c; ++j) mean += xr[j];
    mean /= Real(c);
    Real var = 0;
    for (int64_t j = 0; j < c; ++j) {
      const Real d = xr[j] - mean;
      var += d * d;
    }
    var /= Real(c);
    const Real inv = Real(1) / std::sqrt(var + eps);
    for (int64_t j = 0; j < c; ++j) yr[j] = (xr[j] - mean) * inv * gp[j] + bp[j];
  }

  if (g) {
    g->record(out, [x, gamma, beta, out, rows, c, eps]() mutable {
      if (!out.has_grad()) return;
      const Real* dy = out.grad().data();
      const Real* xp2 = x.data();
      const Real* gp2 = gamma.data();
      const bool gx = needs_grad(x);
      const bool gg = needs_grad(gamma);
      const bool gb = needs_grad(beta);
      Real* dx = gx ? x.grad().data() : nullptr;
      Real* dg = gg ? gamma.grad().data() : nullptr;
      Real* db = gb ? beta.grad().data() : nullptr;
      std::vector<Real> xhat(static_cast<size_t>(c));
      for (int64_t r = 0; r < rows; ++r) {
        const Real* xr = xp2 + r * c;
        const Real* dyr = dy + r * c;
        Real mean = 0;
        for (int64_t j = 0; j < c; ++j) mean += xr[j];
        mean /= Real(c);
        Real var = 0;
        for (int64_t j = 0; j < c; ++j) {
          const Real d = xr[j] - mean;
          var += d * d;
        }
        var /= Real(c);
        const Real inv = Real(1) / std::sqrt(var + eps);
        for (int64_t j = 0; j < c; ++j) xhat[j] = (xr[j] - mean) * inv;
        if (gg) {
          for (int64_t j = 0; j < c; ++j) dg[j] += dyr[j] * xhat[j];
        }
        if (gb) {
          for (int64_t j = 0; j < c; ++j) db[j] += dyr[j];
        }
        if (gx) {
          Real sum1 = 0, sum2 = 0;
          for (int64_t j = 0; j < c; ++j) {
            const Real dxh = dyr[j] * gp2[j];
            sum1 += dxh;
            sum2 += dxh * xhat[j];
          }
          Real* dxr = dx + r * c;
          for (int64_t j = 0; j < c; ++j) {
            const Real dxh = dyr[j] * gp2[j];
            dxr[j] += inv * (dxh - (sum1 + xhat[j] * sum2) / Real(c));
          }
        }
      }
    });
  }
  return out;
}

// ------------------------------------------------------------------ conv2d

template <class Real>
Tensor<Real> conv2d_zero_pad(Graph<Real>* g, const Tensor<Real>& x, const Tensor<Real>& kernels,
                             const Mask& mask) {
  if (kernels.rank() != 4 || kernels.dim(0) != kernels.dim(1)) {
    throw DimensionError(str("conv2d: kernels must be [k,k,cin,cout], got ",
                             shape_str(kernels.shape())));
  }
  const int64_t k = kernels.dim(0);
  if (k % 2 == 0) throw ConfigError(str("conv2d: kernel size must be odd, got ", k));
  int64_t batch, n, ci;
  grid_dims(x, mask, "conv2d", &batch, &n, &ci);
  if (kernels.dim(2) != ci) {
    throw DimensionError(str("conv2d: input has ", ci, " channels but kernels are ",
                             shape_str(kernels.shape())));
  }
  const int64_t co = kernels.dim(3);
  const int64_t half = k / 2;

  Shape out_shape = x.shape();
  out_shape.back() = co;
  Tensor<Real> out = Tensor<Real>::zeros(out_shape);

  const Real* xp = x.data();
  const Real* kp = kernels.data();
  Real* yp = out.data();
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        if (!mask.at(b, i, j)) continue;  // masked outputs stay exactly 0
        Real* yr = yp + ((b * n + i) * n + j) * co;
        for (int64_t di = 0; di < k; ++di) {
          const int64_t ii = i + di - half;
          if (ii < 0 || ii >= n) continue;
          for (int64_t dj = 0; dj < k; ++dj) {
            const int64_t jj = j + dj - half;
            if (jj < 0 || jj >= n || !mask.at(b, ii, jj)) continue;
            const Real* xr = xp + ((b * n + ii) * n + jj) * ci;
            const Real* kr = kp + (di * k + dj) * ci * co;
            for (int64_t c = 0; c < ci; ++c) {
              const Real xv = xr[c];
              const Real* kc = kr + c * co;
              for (int64_t o = 0; o < co; ++o) yr[o] += xv * kc[o];
            }
          }
        }
      }
    }
  }

  if (g) {
    g->record(out, [x, kernels, out, mask, batch, n, ci, co, k, half]() mutable {
      if (!out.has_grad()) return;
      const Real* dy = out.grad().data();
      const Real* kp2 = kernels.data();
      const Real* xp2 = x.data();
      if (needs_grad(x)) {
        // kernels transposed to [k,k,co,ci] so the inner loop accumulates
        // over contiguous ci instead of reducing over strided co
        std::vector<Real> kt(static_cast<size_t>(k * k * co * ci));
        for (int64_t tap = 0; tap < k * k; ++tap) {
          const Real* src = kp2 + tap * ci * co;
          Real* dst = kt.data() + tap * co * ci;
          for (int64_t c = 0; c < ci; ++c)
            for (int64_t o = 0; o < co; ++o) dst[o * ci + c] = src[c * co + o];
        }
        Real* dx = x.grad().data();
        for (int64_t b = 0; b < batch; ++b) {
          for (int64_t p = 0; p < n; ++p) {
            for (int64_t q = 0; q < n; ++q) {
              if (!mask.at(b, p, q)) continue;  // masked inputs were never read
              Real* dxr = dx + ((b * n + p) * n + q) * ci;
              for (int64_t di = 0; di < k; ++di) {
                const int64_t i = p - di + half;
                if (i < 0 || i >= n) continue;
                for (int64_t dj = 0; dj < k; ++dj) {
                  const int64_t j = q - dj + half;
                  if (j < 0 || j >= n || !mask.at(b, i, j)) continue;
                  const Real* dyr = dy + ((b * n + i) * n + j) * co;
                  const Real* kr = kt.data() + (di * k + dj) * co * ci;
                  for (int64_t o = 0; o < co; ++o) {
                    const Real dv = dyr[o];
                    const Real* kc = kr + o * ci;
                    for (int64_t c = 0; c < ci; ++c) dxr[c] += dv * kc[c];
                  }
                }
              }
            }
          }
        }
      }
      if (needs_grad(kernels)) {
        Real* dk = kernels.grad().data();
        for (int64_t b = 0; b < batch; ++b) {
          for (int64_t i = 0; i < n; ++i) {
            for (int64_t j = 0; j < n; ++j) {
              if (!mask.at(b, i, j)) continue;
              const Real* dyr = dy + ((b * n + i) * n + j) * co;
              for (int64_t di = 0; di < k; ++di) {
                const int64_t ii = i + di - half;
                if (ii < 0 || ii >= n) continue;
                for (int64_t dj = 0; dj < k; ++dj) {
                  const int64_t jj = j + dj - half;
                  if (jj < 0 || jj >= n || !mask.at(b, ii, jj)) continue;
                  const Real* xr = xp2 + ((b * n + ii) * n + jj) * ci;
                  Real* dkr = dk + (di * k + dj) * ci * co;
                  for (int64_t c = 0; c < ci; ++c) {
                    const Real xv = xr[c];
                    Real* dkc = dkr + c * co;
                    for (int64_t o = 0; o < co; ++o) dkc[o] += xv * dyr[o];
                  }
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// ------------------------------------------------------------------ conv1d

template <class Real>
Tensor<Real> conv1d_tokens(Graph<Real>* g, const Tensor<Real>& x, const Tensor<Real>& kernels) {
  if (x.rank() != 2 || kernels.rank() != 3) {
    throw DimensionError(str("conv1d: expected x [n,d] and kernels [k,din,dout], got ",
                             shape_str(x.shape()), " and ", shape_str(kernels.shape())));
  }
  const int64_t k = kernels.dim(0);
  if (k % 2 == 0) throw ConfigError(str("conv1d: kernel size must be odd, got ", k));
  const int64_t n = x.dim(0), din = x.dim(1), dout = kernels.dim(2);
  if (kernels.dim(1) != din) {
    throw DimensionError(str("conv1d: input dim ", din, " but kernels ",
                             shape_str(kernels.shape())));
  }
  const int64_t half = k / 2;

  Tensor<Real> out = Tensor<Real>::zeros({n, dout});
  const Real* xp = x.data();
  const Real* kp = kernels.data();
  Real* yp = out.data();
  for (int64_t i = 0; i < n; ++i) {
    Real* yr = yp + i * dout;
    for (int64_t dj = 0; dj < k; ++dj) {
      const int64_t jj = i + dj - half;
      if (jj < 0 || jj >= n) continue;
      const Real* xr = xp + jj * din;
      const Real* kr = kp + dj * din * dout;
      for (int64_t c = 0; c < din; ++c) {
        const Real xv = xr[c];
        const Real* kc = kr + c * dout;
        for (int64_t o = 0; o < dout; ++o) yr[o] += xv * kc[o];
      }
    }
  }

  if (g) {
    g->record(out, [x, kernels, out, n, din, dout, k, half]() mutable {
      if (!out.has_grad()) return;
      const Real* dy = out.grad().data();
      if (needs_grad(x)) {
        Real* dx = x.grad().data();
        const Real* kp2 = kernels.data();
        for (int64_t p = 0; p < n; ++p) {
          Real* dxr = dx + p * din;
          for (int64_t dj = 0; dj < k; ++dj) {
            const int64_t i = p - dj + half;
            if (i < 0 || i >= n) continue;
            const Real* dyr = dy + i * dout;
            const Real* kr = kp2 + dj * din * dout;
            for (int64_t c = 0; c < din; ++c) {
              const Real* kc = kr + c * dout;
              Real s = 0;
              for (int64_t o = 0; o < dout; ++o) s += dyr[o] * kc[o];
              dxr[c] += s;
            }
          }
        }
      }
      if (needs_grad(kernels)) {
        Real* dk = kernels.grad().data();
        const Real* xp2 = x.data();
        for (int64_t i = 0; i < n; ++i) {
          const Real* dyr = dy + i * dout;
          for (int64_t dj = 0; dj < k; ++dj) {
            const int64_t jj = i + dj - half;
            if (jj < 0 || jj >= n) continue;
            const Real* xr = xp2 + jj * din;
            Real* dkr = dk + dj * din * dout;
            for (int64_t c = 0; c < din; ++c) {
              const Real xv = xr[c];
              Real* dkc = dkr + c * dout;
              for (int64_t o = 0; o < dout; ++o) dkc[o] += xv * dyr[o];
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- pooling

template <class Real>
Tensor<Real> piecewise_max_pool(Graph<Real>* g, const Tensor<Real>& x, const Groups& groups) {
  if (x.rank() != 2) {
    throw DimensionError(str("piecewise_max_pool: expected [p,d], got ", shape_str(x.shape())));
  }
  const int64_t p = x.dim(0), d = x.dim(1);
  if (groups.empty()) throw ValidationError("piecewise_max_pool: no groups");
  int64_t cursor = 0;
  for (const auto& [b, e] : groups) {
    if (b != cursor) {
      throw ValidationError(str("piecewise_max_pool: group [", b, ",", e,
                                ") does not continue at ", cursor));
    }
    if (e <= b) throw ValidationError(str("piecewise_max_pool: empty group [", b, ",", e, ")"));
    cursor = e;
  }
  if (cursor != p) {
    throw ValidationError(
        str("piecewise_max_pool: groups cover [0,", cursor, ") but input has ", p, " rows"));
  }

  const int64_t w = static_cast<int64_t>(groups.size());
  Tensor<Real> out = Tensor<Real>::zeros({w, d});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(w * d));
  const Real* xp = x.data();
  Real* yp = out.data();
  for (int64_t wi = 0; wi < w; ++wi) {
    const auto [b, e] = groups[static_cast<size_t>(wi)];
    for (int64_t c = 0; c < d; ++c) {
      Real best = xp[b * d + c];
      int64_t arg = b;
      for (int64_t r = b + 1; r < e; ++r) {
        if (xp[r * d + c] > best) {  // strict: first max wins
          best = xp[r * d + c];
          arg = r;
        }
      }
      yp[wi * d + c] = best;
      (*argmax)[static_cast<size_t>(wi * d + c)] = arg;
    }
  }

  if (g) {
    g->record(out, [x, out, argmax, w, d]() mutable {
      if (!out.has_grad() || !needs_grad(x)) return;
      const Real* dy = out.grad().data();
      Real* dx = x.grad().data();
      for (int64_t wi = 0; wi < w; ++wi)
        for (int64_t c = 0; c < d; ++c)
          dx[(*argmax)[static_cast<size_t>(wi * d + c)] * d + c] += dy[wi * d + c];
    });
  }
  return out;
}

// -------------------------------------------------------------- embedding

template <class Real>
Tensor<Real> embedding_lookup(Graph<Real>* g, const Tensor<Real>& table,
                              const std::vector<int64_t>& ids) {
  if (table.rank() != 2) {
    throw DimensionError(str("embedding_lookup: table must be [v,d], got ",
                             shape_str(table.shape())));
  }
  const int64_t v = table.dim(0), d = table.dim(1);
  const int64_t n = static_cast<int64_t>(ids.size());
  for (int64_t id : ids) {
    if (id < 0 || id >= v) throw ValidationError(str("embedding_lookup: id ", id, " not in [0,", v, ")"));
  }
  Tensor<Real> out = Tensor<Real>::zeros({n, d});
  const Real* tp = table.data();
  Real* yp = out.data();
  for (int64_t i = 0; i < n; ++i)
    std::copy(tp + ids[static_cast<size_t>(i)] * d, tp + (ids[static_cast<size_t>(i)] + 1) * d,
              yp + i * d);

  if (g) {
    g->record(out, [table, out, ids, n, d]() mutable {
      if (!out.has_grad() || !needs_grad(table)) return;
      const Real* dy = out.grad().data();
      Real* dt = table.grad().data();
      for (int64_t i = 0; i < n; ++i) {
        Real* row = dt + ids[static_cast<size_t>(i)] * d;
        const Real* dyr = dy + i * d;
        for (int64_t c = 0; c < d; ++c) row[c] += dyr[c];
      }
    });
  }
  return out;
}

// ------------------------------------------------------------------ slices

template <class Real>
Tensor<Real> slice_rows(Graph<Real>* g, const Tensor<Real>& x, int64_t start, int64_t len) {
  if (x.rank() < 1) throw DimensionError("slice_rows: scalar input");
  const int64_t rows = x.dim(0);
  if (start < 0 || len < 0 || start + len > rows) {
    throw DimensionError(
        str("slice_rows: range [", start, ",", start + len, ") out of ", rows, " rows"));
  }
  const int64_t stride = x.numel() / std::max<int64_t>(rows, 1);
  Shape out_shape = x.shape();
  out_shape[0] = len;
  Tensor<Real> out = Tensor<Real>::zeros(out_shape);
  std::copy(x.data() + start * stride, x.data() + (start + len) * stride, out.data());

  if (g) {
    g->record(out, [x, out, start, len, stride]() mutable {
      if (!out.has_grad() || !needs_grad(x)) return;
      const Real* dy = out.grad().data();
      Real* dx = x.grad().data() + start * stride;
      const int64_t count = len * stride;
      for (int64_t i = 0; i < count; ++i) dx[i] += dy[i];
    });
  }
  return out;
}

template <class Real>
Tensor<Real> pad_stack(Graph<Real>* g, const std::vector<Tensor<Real>>& rows, int64_t n) {
  if (rows.empty()) throw ContractError("pad_stack: no inputs");
  const int64_t d = rows[0].rank() == 2 ? rows[0].dim(1) : -1;
  const int64_t batch = static_cast<int64_t>(rows.size());
  for (const auto& r : rows) {
    if (r.rank() != 2 || r.dim(1) != d) {
      throw DimensionError(str("pad_stack: inconsistent input ", shape_str(r.shape())));
    }
    if (r.dim(0) > n) {
      throw DimensionError(str("pad_stack: input has ", r.dim(0), " rows > padded size ", n));
    }
  }
  Tensor<Real> out = Tensor<Real>::zeros({batch, n, d});
  Real* yp = out.data();
  for (int64_t b = 0; b < batch; ++b) {
    const auto& r = rows[static_cast<size_t>(b)];
    std::copy(r.data(), r.data() + r.numel(), yp + b * n * d);
  }

  if (g) {
    g->record(out, [rows, out, n, d]() mutable {
      if (!out.has_grad()) return;
      const Real* dy = out.grad().data();
      for (size_t b = 0; b < rows.size(); ++b) {
        const auto& r = rows[b];
        if (!needs_grad(r)) continue;
        Real* dr = r.grad().data();
        const Real* src = dy + static_cast<int64_t>(b) * n * d;
        const int64_t count = r.numel();
        for (int64_t i = 0; i < count; ++i) dr[i] += src[i];
      }
    });
  }
  return out;
}

// ----------------------------------------------------------- span grids

template <class Real>
Tensor<Real> grid_from_rows(Graph<Real>* g, const Tensor<Real>& a, const Tensor<Real>& bcols,
                            const Tensor<Real>& offs, int64_t max_offset) {
  check_same_shape("grid_from_rows", a, bcols);
  if (a.rank() != 3) {
    throw DimensionError(str("grid_from_rows: expected [batch,n,r], got ", shape_str(a.shape())));
  }
  const int64_t batch = a.dim(0), n = a.dim(1), r = a.dim(2);
  if (offs.rank() != 2 || offs.dim(0) != 2 * max_offset + 1 || offs.dim(1) != r) {
    throw DimensionError(str("grid_from_rows: offset table ", shape_str(offs.shape()),
                             " does not match [", 2 * max_offset + 1, ",", r, "]"));
  }
  Tensor<Real> out = Tensor<Real>::zeros({batch, n, n, r});
  const Real* ap = a.data();
  const Real* bp = bcols.data();
  const Real* op = offs.data();
  Real* yp = out.data();
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t i = 0; i < n; ++i) {
      const Real* ar = ap + (b * n + i) * r;
      for (int64_t j = 0; j < n; ++j) {
        const int64_t off = std::clamp(i - j, -max_offset, max_offset) + max_offset;
        const Real* br = bp + (b * n + j) * r;
        const Real* orow = op + off * r;
        Real* yr = yp + ((b * n + i) * n + j) * r;
        for (int64_t c = 0; c < r; ++c) yr[c] = ar[c] + br[c] + orow[c];
      }
    }
  }

  if (g) {
    g->record(out, [a, bcols, offs, out, batch, n, r, max_offset]() mutable {
      if (!out.has_grad()) return;
      const Real* dy = out.grad().data();
      const bool ga = needs_grad(a);
      const bool gb = needs_grad(bcols);
      const bool go = needs_grad(offs);
      Real* da = ga ? a.grad().data() : nullptr;
      Real* db = gb ? bcols.grad().data() : nullptr;
      Real* do_ = go ? offs.grad().data() : nullptr;
      for (int64_t b = 0; b < batch; ++b) {
        for (int64_t i = 0; i < n; ++i) {
          for (int64_t j = 0; j < n; ++j) {
            const Real* dyr = dy + ((b * n + i) * n + j) * r;
            if (ga) {
              Real* dar = da + (b * n + i) * r;
              for (int64_t c = 0; c < r; ++c) dar[c] += dyr[c];
            }
            if (gb) {
              Real* dbr = db + (b * n + j) * r;
              for (int64_t c = 0; c < r; ++c) dbr[c] += dyr[c];
            }
            if (go) {
              const int64_t off = std::clamp(i - j, -max_offset, max_offset) + max_offset;
              Real* dor = do_ + off * r;
              for (int64_t c = 0; c < r; ++c) dor[c] += dyr[c];
            }
          }
        }
      }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> mh_bilinear_grid(Graph<Real>* g, const Tensor<Real>& hs, const Tensor<Real>& he,
                              const Tensor<Real>& u) {
  check_same_shape("mh_bilinear_grid", hs, he);
  if (hs.rank() != 3 || u.rank() != 4 || u.dim(1) != u.dim(3)) {
    throw DimensionError(str("mh_bilinear_grid: expected hs/he [batch,n,h] and u [k,hk,rk,hk], got ",
                             shape_str(hs.shape()), " and ", shape_str(u.shape())));
  }
  const int64_t batch = hs.dim(0), n = hs.dim(1), h = hs.dim(2);
  const int64_t heads = u.dim(0), hk = u.dim(1), rk = u.dim(2);
  if (heads * hk != h) {
    throw DimensionError(str("mh_bilinear_grid: ", heads, " heads of width ", hk,
                             " do not tile hidden size ", h));
  }
  const int64_t r = heads * rk;
  Tensor<Real> out = Tensor<Real>::zeros({batch, n, n, r});

  const Real* hsp = hs.data();
  const Real* hep = he.data();
  const Real* up = u.data();
  Real* yp = out.data();
  std::vector<Real> m(static_cast<size_t>(n * rk * hk));
  std::vector<Real> mt(static_cast<size_t>(n * hk * rk));  // m transposed per row
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t k = 0; k < heads; ++k) {
      // m[i,f,t] = sum_s hs[b,i,k*hk+s] * u[k,s,f,t]
      std::fill(m.begin(), m.end(), Real(0));
      for (int64_t i = 0; i < n; ++i) {
        const Real* hr = hsp + (b * n + i) * h + k * hk;
        Real* mr = m.data() + i * rk * hk;
        for (int64_t s = 0; s < hk; ++s) {
          const Real hv = hr[s];
          const Real* ur = up + ((k * hk + s) * rk) * hk;
          for (int64_t ft = 0; ft < rk * hk; ++ft) mr[ft] += hv * ur[ft];
        }
      }
      for (int64_t i = 0; i < n; ++i) {
        const Real* mr = m.data() + i * rk * hk;
        Real* mtr = mt.data() + i * hk * rk;
        for (int64_t f = 0; f < rk; ++f)
          for (int64_t t = 0; t < hk; ++t) mtr[t * rk + f] = mr[f * hk + t];
      }
      for (int64_t i = 0; i < n; ++i) {
        const Real* mtr = mt.data() + i * hk * rk;
        for (int64_t j = 0; j < n; ++j) {
          const Real* er = hep + (b * n + j) * h + k * hk;
          Real* yr = yp + ((b * n + i) * n + j) * r + k * rk;
          for (int64_t t = 0; t < hk; ++t) {
            const Real ev = er[t];
            const Real* mrow = mtr + t * rk;
            for (int64_t f = 0; f < rk; ++f) yr[f] += ev * mrow[f];
          }
        }
      }
    }
  }

  if (g) {
    g->record(out, [hs, he, u, out, batch, n, h, heads, hk, rk, r]() mutable {
      if (!out.has_grad()) return;
      const Real* dy = out.grad().data();
      const Real* hsp2 = hs.data();
      const Real* hep2 = he.data();
      const Real* up2 = u.data();
      const bool gs = needs_grad(hs);
      const bool ge = needs_grad(he);
      const bool gu = needs_grad(u);
      Real* dhs = gs ? hs.grad().data() : nullptr;
      Real* dhe = ge ? he.grad().data() : nullptr;
      Real* du = gu ? u.grad().data() : nullptr;
      std::vector<Real> m(static_cast<size_t>(n * rk * hk));
      std::vector<Real> dm(static_cast<size_t>(n * rk * hk));
      std::vector<Real> ut;
      for (int64_t b = 0; b < batch; ++b) {
        for (int64_t k = 0; k < heads; ++k) {
          std::fill(m.begin(), m.end(), Real(0));
          for (int64_t i = 0; i < n; ++i) {
            const Real* hr = hsp2 + (b * n + i) * h + k * hk;
            Real* mr = m.data() + i * rk * hk;
            for (int64_t s = 0; s < hk; ++s) {
              const Real hv = hr[s];
              const Real* ur = up2 + ((k * hk + s) * rk) * hk;
              for (int64_t ft = 0; ft < rk * hk; ++ft) mr[ft] += hv * ur[ft];
            }
          }
          std::fill(dm.begin(), dm.end(), Real(0));
          for (int64_t i = 0; i < n; ++i) {
            Real* dmr = dm.data() + i * rk * hk;
            const Real* mr = m.data() + i * rk * hk;
            for (int64_t j = 0; j < n; ++j) {
              const Real* dyr = dy + ((b * n + i) * n + j) * r + k * rk;
              const Real* er = hep2 + (b * n + j) * h + k * hk;
              for (int64_t f = 0; f < rk; ++f) {
                const Real dv = dyr[f];
                if (dv == Real(0)) continue;
                Real* dmft = dmr + f * hk;
                for (int64_t t = 0; t < hk; ++t) dmft[t] += dv * er[t];
              }
              if (ge) {
                Real* der = dhe + (b * n + j) * h + k * hk;
                for (int64_t f = 0; f < rk; ++f) {
                  const Real dv = dyr[f];
                  if (dv == Real(0)) continue;
                  const Real* mft = mr + f * hk;
                  for (int64_t t = 0; t < hk; ++t) der[t] += dv * mft[t];
                }
              }
            }
          }
          if (gs && ut.empty()) {
            // u transposed to [k, f*t, s] so the dHs loop accumulates over
            // contiguous s
            ut.resize(static_cast<size_t>(heads * rk * hk * hk));
            for (int64_t kk = 0; kk < heads; ++kk)
              for (int64_t s = 0; s < hk; ++s)
                for (int64_t ft = 0; ft < rk * hk; ++ft)
                  ut[static_cast<size_t>((kk * rk * hk + ft) * hk + s)] =
                      up2[((kk * hk + s) * rk) * hk + ft];
          }
          for (int64_t i = 0; i < n; ++i) {
            const Real* dmr = dm.data() + i * rk * hk;
            if (gs) {
              Real* dhr = dhs + (b * n + i) * h + k * hk;
              for (int64_t ft = 0; ft < rk * hk; ++ft) {
                const Real dmv = dmr[ft];
                if (dmv == Real(0)) continue;
                const Real* ur = ut.data() + (k * rk * hk + ft) * hk;
                for (int64_t s = 0; s < hk; ++s) dhr[s] += dmv * ur[s];
              }
            }
            if (gu) {
              const Real* hr = hsp2 + (b * n + i) * h + k * hk;
              for (int64_t s = 0; s < hk; ++s) {
                const Real hv = hr[s];
                Real* dur = du + ((k * hk + s) * rk) * hk;
                for (int64_t ft = 0; ft < rk * hk; ++ft) dur[ft] += hv * dmr[ft];
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// -------------------------------------------------------------------- mask

template <class Real>
Tensor<Real> apply_mask(Graph<Real>* g, const Tensor<Real>& x, const Mask& mask) {
  int64_t batch, n, c;
  grid_dims(x, mask, "apply_mask", &batch, &n, &c);
  Tensor<Real> out = Tensor<Real>::zeros(x.shape());
  const Real* xp = x.data();
  Real* yp = out.data();
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        if (!mask.at(b, i, j)) continue;
        const int64_t base = ((b * n + i) * n + j) * c;
        for (int64_t t = 0; t < c; ++t) yp[base + t] = xp[base + t];
      }
    }
  }

  if (g) {
    g->record(out, [x, out, mask, batch, n, c]() mutable {
      if (!out.has_grad() || !needs_grad(x)) return;
      const Real* dy = out.grad().data();
      Real* dx = x.grad().data();
      for (int64_t b = 0; b < batch; ++b) {
        for (int64_t i = 0; i < n; ++i) {
          for (int64_t j = 0; j < n; ++j) {
            if (!mask.at(b, i, j)) continue;
            const int64_t base = ((b * n + i) * n + j) * c;
            for (int64_t t = 0; t < c; ++t) dx[base + t] += dy[base + t];
          }
        }
      }
    });
  }
  return out;
}

// -------------------------------------------------------------------- bias

template <class Real>
Tensor<Real> bias_add_last(Graph<Real>* g, const Tensor<Real>& x, const Tensor<Real>& bias) {
  if (x.rank() < 1 || bias.rank() != 1 || bias.dim(0) != x.dim(x.rank() - 1)) {
    throw DimensionError(str("bias_add_last: x ", shape_str(x.shape()), " with bias ",
                             shape_str(bias.shape())));
  }
  const int64_t t = bias.dim(0);
  const int64_t rows = rows_before_last(x.shape());
  Tensor<Real> out = Tensor<Real>::zeros(x.shape());
  const Real* xp = x.data();
  const Real* bp = bias.data();
  Real* yp = out.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < t; ++j) yp[r * t + j] = xp[r * t + j] + bp[j];

  if (g) {
    g->record(out, [x, bias, out, rows, t]() mutable {
      if (!out.has_grad()) return;
      const Real* dy = out.grad().data();
      if (needs_grad(x)) {
        Real* dx = x.grad().data();
        const int64_t count = rows * t;
        for (int64_t i = 0; i < count; ++i) dx[i] += dy[i];
      }
      if (needs_grad(bias)) {
        Real* db = bias.grad().data();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < t; ++j) db[j] += dy[r * t + j];
      }
    });
  }
  return out;
}

// ------------------------------------------------------------ reductions

template <class Real>
Tensor<Real> weighted_sum(Graph<Real>* g, const Tensor<Real>& x, const std::vector<Real>& w) {
  if (static_cast<int64_t>(w.size()) != x.numel()) {
    throw DimensionError(str("weighted_sum: ", w.size(), " weights for ", x.numel(), " elements"));
  }
  Real s = 0;
  const Real* xp = x.data();
  for (int64_t i = 0; i < x.numel(); ++i) s += w[static_cast<size_t>(i)] * xp[i];
  Tensor<Real> out = Tensor<Real>::scalar(s);

  if (g) {
    g->record(out, [x, out, w]() mutable {
      if (!out.has_grad() || !needs_grad(x)) return;
      const Real dl = out.grad()[0];
      Real* dx = x.grad().data();
      for (int64_t i = 0; i < x.numel(); ++i) dx[i] += w[static_cast<size_t>(i)] * dl;
    });
  }
  return out;
}

template <class Real>
Tensor<Real> dropout(Graph<Real>* g, const Tensor<Real>& x, Real rate, Rng& rng) {
  if (rate < Real(0) || rate >= Real(1)) throw ConfigError(str("dropout: rate must be in [0,1)"));
  if (rate == Real(0)) return x;
  const Real scale = Real(1) / (Real(1) - rate);
  const int64_t n = x.numel();
  auto keep = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(n));
  Tensor<Real> out = Tensor<Real>::zeros(x.shape());
  const Real* xp = x.data();
  Real* yp = out.data();
  for (int64_t i = 0; i < n; ++i) {
    const bool k = rng.uniform() >= static_cast<double>(rate);
    (*keep)[static_cast<size_t>(i)] = k;
    if (k) yp[i] = xp[i] * scale;
  }

  if (g) {
    g->record(out, [x, out, keep, scale, n]() mutable {
      if (!out.has_grad() || !needs_grad(x)) return;
      const Real* dy = out.grad().data();
      Real* dx = x.grad().data();
      for (int64_t i = 0; i < n; ++i)
        if ((*keep)[static_cast<size_t>(i)]) dx[i] += dy[i] * scale;
    });
  }
  return out;
}

// --------------------------------------------------------------------- bce

namespace {

template <class Real>
void check_bce_inputs(const char* op, const Tensor<Real>& p, const Tensor<Real>& y,
                      const Mask& mask, int64_t* batch, int64_t* n, int64_t* t) {
  grid_dims(p, mask, op, batch, n, t);
  check_same_shape(op, p, y);
  const Real* yp = y.data();
  for (int64_t i = 0; i < y.numel(); ++i) {
    if (yp[i] != Real(0) && yp[i] != Real(1)) {
      throw ValidationError(str(op, ": targets must be 0/1, found ", yp[i]));
    }
  }
  for (int64_t b = 0; b < *batch; ++b) {
    for (int64_t i = 0; i < *n; ++i) {
      for (int64_t j = i + 1; j < *n; ++j) {
        if (!mask.at(b, i, j)) continue;
        const Real* upper = yp + ((b * *n + i) * *n + j) * *t;
        const Real* lower = yp + ((b * *n + j) * *n + i) * *t;
        for (int64_t c = 0; c < *t; ++c) {
          if (upper[c] != lower[c]) {
            throw ValidationError(str(op, ": asymmetric targets at (", b, ",", i, ",", j,
                                      ") type ", c));
          }
        }
      }
    }
  }
}

inline int64_t masked_cell_count(const Mask& mask) {
  int64_t c = 0;
  for (uint8_t v : mask.v) c += v != 0;
  return c;
}

}  // namespace

template <class Real>
Tensor<Real> bce_mean_masked(Graph<Real>* g, const Tensor<Real>& p, const Tensor<Real>& y,
                             const Mask& mask) {
  int64_t batch, n, t;
  check_bce_inputs("bce", p, y, mask, &batch, &n, &t);
  const int64_t valid = masked_cell_count(mask) * t;
  const Real floor = prob_floor<Real>();
  const Real* pp = p.data();
  const Real* yp = y.data();

  auto term = [&](int64_t b, int64_t i, int64_t j, int64_t c) -> Real {
    const int64_t idx = ((b * n + i) * n + j) * t + c;
    const Real pv = pp[idx];
    if (yp[idx] == Real(1)) return -std::log(std::max(pv, floor));
    return -std::log(std::max(Real(1) - pv, floor));
  };

  // Off-diagonal terms are paired min+max so the sum is exactly invariant
  // under transposing p over its first two grid dims.
  Real sum = 0;
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t i = 0; i < n; ++i) {
      if (mask.at(b, i, i)) {
        for (int64_t c = 0; c < t; ++c) sum += term(b, i, i, c);
      }
      for (int64_t j = i + 1; j < n; ++j) {
        if (!mask.at(b, i, j)) continue;
        for (int64_t c = 0; c < t; ++c) {
          const Real t1 = term(b, i, j, c);
          const Real t2 = term(b, j, i, c);
          sum += std::min(t1, t2) + std::max(t1, t2);
        }
      }
    }
  }
  Tensor<Real> out = Tensor<Real>::scalar(valid > 0 ? sum / Real(valid) : Real(0));

  if (g) {
    g->record(out, [p, y, out, mask, batch, n, t, valid, floor]() mutable {
      if (!out.has_grad() || !needs_grad(p) || valid == 0) return;
      const Real dl = out.grad()[0] / Real(valid);
      const Real* pp2 = p.data();
      const Real* yp2 = y.data();
      Real* dp = p.grad().data();
      for (int64_t b = 0; b < batch; ++b) {
        for (int64_t i = 0; i < n; ++i) {
          for (int64_t j = 0; j < n; ++j) {
            if (!mask.at(b, i, j)) continue;
            const int64_t base = ((b * n + i) * n + j) * t;
            for (int64_t c = 0; c < t; ++c) {
              const Real pv = pp2[base + c];
              if (yp2[base + c] == Real(1)) {
                if (pv > floor) dp[base + c] += dl * (-Real(1) / pv);
              } else {
                if (Real(1) - pv > floor) dp[base + c] += dl * (Real(1) / (Real(1) - pv));
              }
            }
          }
        }
      }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> bce_logits_mean_masked(Graph<Real>* g, const Tensor<Real>& z, const Tensor<Real>& y,
                                    const Mask& mask) {
  int64_t batch, n, t;
  check_bce_inputs("bce_logits", z, y, mask, &batch, &n, &t);
  const int64_t valid = masked_cell_count(mask) * t;
  const Real* zp = z.data();
  const Real* yp = y.data();

  auto term = [&](int64_t b, int64_t i, int64_t j, int64_t c) -> Real {
    const int64_t idx = ((b * n + i) * n + j) * t + c;
    return softplus_scalar(zp[idx]) - zp[idx] * yp[idx];
  };

  Real sum = 0;
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t i = 0; i < n; ++i) {
      if (mask.at(b, i, i)) {
        for (int64_t c = 0; c < t; ++c) sum += term(b, i, i, c);
      }
      for (int64_t j = i + 1; j < n; ++j) {
        if (!mask.at(b, i, j)) continue;
        for (int64_t c = 0; c < t; ++c) {
          const Real t1 = term(b, i, j, c);
          const Real t2 = term(b, j, i, c);
          sum += std::min(t1, t2) + std::max(t1, t2);
        }
      }
    }
  }
  Tensor<Real> out = Tensor<Real>::scalar(valid > 0 ? sum / Real(valid) : Real(0));

  if (g) {
    g->record(out, [z, y, out, mask, batch, n, t, valid]() mutable {
      if (!out.has_grad() || !needs_grad(z) || valid == 0) return;
      const Real dl = out.grad()[0] / Real(valid);
      const Real* zp2 = z.data();
      const Real* yp2 = y.data();
      Real* dz = z.grad().data();
      for (int64_t b = 0; b < batch; ++b) {
        for (int64_t i = 0; i < n; ++i) {
          for (int64_t j = 0; j < n; ++j) {
            if (!mask.at(b, i, j)) continue;
            const int64_t base = ((b * n + i) * n + j) * t;
            for (int64_t c = 0; c < t; ++c)
              dz[base + c] += dl * (sigmoid_scalar(zp2[base + c]) - yp2[base + c]);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------- instantiation

#define NNER_INSTANTIATE_OPS(Real)                                                              \
  template class Tensor<Real>;                                                                  \
  template class Graph<Real>;                                                                   \
  template bool needs_grad<Real>(const Tensor<Real>&);                                          \
  template Tensor<Real> matmul<Real>(Graph<Real>*, const Tensor<Real>&, const Tensor<Real>&);   \
  template Tensor<Real> matmul_nt<Real>(Graph<Real>*, const Tensor<Real>&, const Tensor<Real>&);\
  template Tensor<Real> add<Real>(Graph<Real>*, const Tensor<Real>&, const Tensor<Real>&);      \
  template Tensor<Real> activation<Real>(Graph<Real>*, const Tensor<Real>&, Act, Real);         \
  template Tensor<Real> layer_norm_feature<Real>(Graph<Real>*, const Tensor<Real>&,             \
                                                 const Tensor<Real>&, const Tensor<Real>&, Real);\
  template Tensor<Real> conv2d_zero_pad<Real>(Graph<Real>*, const Tensor<Real>&,                \
                                              const Tensor<Real>&, const Mask&);                \
  template Tensor<Real> conv1d_tokens<Real>(Graph<Real>*, const Tensor<Real>&,                  \
                                            const Tensor<Real>&);                               \
  template Tensor<Real> piecewise_max_pool<Real>(Graph<Real>*, const Tensor<Real>&,             \
                                                 const Groups&);                                \
  template Tensor<Real> embedding_lookup<Real>(Graph<Real>*, const Tensor<Real>&,               \
                                               const std::vector<int64_t>&);                    \
  template Tensor<Real> slice_rows<Real>(Graph<Real>*, const Tensor<Real>&, int64_t, int64_t);  \
  template Tensor<Real> pad_stack<Real>(Graph<Real>*, const std::vector<Tensor<Real>>&,         \
                                        int64_t);                                               \
  template Tensor<Real> grid_from_rows<Real>(Graph<Real>*, const Tensor<Real>&,                 \
                                             const Tensor<Real>&, const Tensor<Real>&, int64_t);\
  template Tensor<Real> mh_bilinear_grid<Real>(Graph<Real>*, const Tensor<Real>&,               \
                                               const Tensor<Real>&, const Tensor<Real>&);       \
  template Tensor<Real> apply_mask<Real>(Graph<Real>*, const Tensor<Real>&, const Mask&);       \
  template Tensor<Real> bias_add_last<Real>(Graph<Real>*, const Tensor<Real>&,                  \
                                            const Tensor<Real>&);                               \
  template Tensor<Real> weighted_sum<Real>(Graph<Real>*, const Tensor<Real>&,                   \
                                           const std::vector<Real>&);                           \
  template Tensor<Real> dropout<Real>(Graph<Real>*, const Tensor<Real>&, Real, Rng&);           \
  template Tensor<Real> bce_mean_masked<Real>(Graph<Real>*, const Tensor<Real>&,                \
                                              const Tensor<Real>&, const Mask&);                \
  template Tensor<Real> bce_logits_mean_masked<Real>(Graph<Real>*, const Tensor<Real>&,         \
                                                     const Tensor<Real>&, const Mask&);

NNER_INSTANTIATE_OPS(float)
NNER_INSTANTIATE_OPS(double)

#undef NNER_INSTANTIATE_OPS

}  // namespace nner
