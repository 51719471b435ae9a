// AVX2 + FMA variants. Compiled with -mavx2 -mfma; only reached through the
// dispatch table after a runtime CPU check.
#include "dsdf/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace dsdf::kernels {
namespace {

constexpr std::size_t kRowBlock = 32;

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double sum = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4,
                     _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

// One input row against four weight rows.
inline void dot4(const double* x, const double* w0, const double* w1, const double* w2,
                 const double* w3, std::size_t n, double* out) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d xv = _mm256_loadu_pd(x + k);
    a0 = _mm256_fmadd_pd(xv, _mm256_loadu_pd(w0 + k), a0);
    a1 = _mm256_fmadd_pd(xv, _mm256_loadu_pd(w1 + k), a1);
    a2 = _mm256_fmadd_pd(xv, _mm256_loadu_pd(w2 + k), a2);
    a3 = _mm256_fmadd_pd(xv, _mm256_loadu_pd(w3 + k), a3);
  }
  double s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
  for (; k < n; ++k) {
    s0 += x[k] * w0[k];
    s1 += x[k] * w1[k];
    s2 += x[k] * w2[k];
    s3 += x[k] * w3[k];
  }
  out[0] = s0;
  out[1] = s1;
  out[2] = s2;
  out[3] = s3;
}

// Two input rows against four weight rows. Lane layout and tail order match
// dot4, so a row gets the same bits whichever path computes it.
inline void dot2x4(const double* x0, const double* x1, const double* w, std::size_t n,
                   double* y0, double* y1) {
  const double* w0 = w;
  const double* w1 = w + n;
  const double* w2 = w + 2 * n;
  const double* w3 = w + 3 * n;
  __m256d a00 = _mm256_setzero_pd(), a01 = _mm256_setzero_pd();
  __m256d a02 = _mm256_setzero_pd(), a03 = _mm256_setzero_pd();
  __m256d a10 = _mm256_setzero_pd(), a11 = _mm256_setzero_pd();
  __m256d a12 = _mm256_setzero_pd(), a13 = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d u = _mm256_loadu_pd(x0 + k);
    const __m256d v = _mm256_loadu_pd(x1 + k);
    __m256d wv = _mm256_loadu_pd(w0 + k);
    a00 = _mm256_fmadd_pd(u, wv, a00);
    a10 = _mm256_fmadd_pd(v, wv, a10);
    wv = _mm256_loadu_pd(w1 + k);
    a01 = _mm256_fmadd_pd(u, wv, a01);
    a11 = _mm256_fmadd_pd(v, wv, a11);
    wv = _mm256_loadu_pd(w2 + k);
    a02 = _mm256_fmadd_pd(u, wv, a02);
    a12 = _mm256_fmadd_pd(v, wv, a12);
    wv = _mm256_loadu_pd(w3 + k);
    a03 = _mm256_fmadd_pd(u, wv, a03);
    a13 = _mm256_fmadd_pd(v, wv, a13);
  }
  double s0 = hsum(a00), s1 = hsum(a01), s2 = hsum(a02), s3 = hsum(a03);
  double t0 = hsum(a10), t1 = hsum(a11), t2 = hsum(a12), t3 = hsum(a13);
  for (; k < n; ++k) {
    s0 += x0[k] * w0[k];
    s1 += x0[k] * w1[k];
    s2 += x0[k] * w2[k];
    s3 += x0[k] * w3[k];
    t0 += x1[k] * w0[k];
    t1 += x1[k] * w1[k];
    t2 += x1[k] * w2[k];
    t3 += x1[k] * w3[k];
  }
  y0[0] = s0;
  y0[1] = s1;
  y0[2] = s2;
  y0[3] = s3;
  y1[0] = t0;
  y1[1] = t1;
  y1[2] = t2;
  y1[3] = t3;
}

void gemm_nt_avx2(const double* x, const double* w, double* y, std::size_t rows, std::size_t in,
                  std::size_t out) {
  std::size_t r = 0;
  for (; r + 2 <= rows; r += 2) {
    const double* x0 = x + r * in;
    double* y0 = y + r * out;
    std::size_t o = 0;
    for (; o + 4 <= out; o += 4) dot2x4(x0, x0 + in, w + o * in, in, y0 + o, y0 + out + o);
    for (; o < out; ++o) {
      y0[o] = dot_avx2(x0, w + o * in, in);
      y0[out + o] = dot_avx2(x0 + in, w + o * in, in);
    }
  }
  for (; r < rows; ++r) {
    const double* xr = x + r * in;
    double* yr = y + r * out;
    std::size_t o = 0;
    for (; o + 4 <= out; o += 4) {
      dot4(xr, w + o * in, w + (o + 1) * in, w + (o + 2) * in, w + (o + 3) * in, in, yr + o);
    }
    for (; o < out; ++o) yr[o] = dot_avx2(xr, w + o * in, in);
  }
}

// dx rows r..r+R-1, columns i..i+7, accumulated over o in order.
template <int R>
inline void nn_tile(const double* dy, const double* w, double* dx, std::size_t in,
                    std::size_t out, std::size_t i) {
  __m256d lo[R], hi[R];
  for (int q = 0; q < R; ++q) lo[q] = hi[q] = _mm256_setzero_pd();
  for (std::size_t o = 0; o < out; ++o) {
    const __m256d w0 = _mm256_loadu_pd(w + o * in + i);
    const __m256d w1 = _mm256_loadu_pd(w + o * in + i + 4);
    for (int q = 0; q < R; ++q) {
      const __m256d g = _mm256_set1_pd(dy[q * out + o]);
      lo[q] = _mm256_fmadd_pd(g, w0, lo[q]);
      hi[q] = _mm256_fmadd_pd(g, w1, hi[q]);
    }
  }
  for (int q = 0; q < R; ++q) {
    _mm256_storeu_pd(dx + q * in + i, lo[q]);
    _mm256_storeu_pd(dx + q * in + i + 4, hi[q]);
  }
}

template <int R>
inline void nn_rows(const double* dy, const double* w, double* dx, std::size_t in,
                    std::size_t out) {
  std::size_t i = 0;
  for (; i + 8 <= in; i += 8) nn_tile<R>(dy, w, dx, in, out, i);
  for (; i < in; ++i) {
    for (int q = 0; q < R; ++q) {
      double s = 0.0;
      for (std::size_t o = 0; o < out; ++o) s = std::fma(dy[q * out + o], w[o * in + i], s);
      dx[q * in + i] = s;
    }
  }
}

void gemm_nn_avx2(const double* dy, const double* w, double* dx, std::size_t rows, std::size_t in,
                  std::size_t out) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) nn_rows<4>(dy + r * out, w, dx + r * in, in, out);
  for (; r < rows; ++r) nn_rows<1>(dy + r * out, w, dx + r * in, in, out);
}

// dw rows o..o+C-1, columns i..i+7, accumulated over r in order.
template <int C>
inline void tn_tile(const double* dy, const double* x, double* dw, std::size_t rows,
                    std::size_t in, std::size_t out, std::size_t o, std::size_t i) {
  __m256d lo[C], hi[C];
  for (int c = 0; c < C; ++c) {
    lo[c] = _mm256_loadu_pd(dw + (o + c) * in + i);
    hi[c] = _mm256_loadu_pd(dw + (o + c) * in + i + 4);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const __m256d x0 = _mm256_loadu_pd(x + r * in + i);
    const __m256d x1 = _mm256_loadu_pd(x + r * in + i + 4);
    for (int c = 0; c < C; ++c) {
      const __m256d g = _mm256_set1_pd(dy[r * out + o + c]);
      lo[c] = _mm256_fmadd_pd(g, x0, lo[c]);
      hi[c] = _mm256_fmadd_pd(g, x1, hi[c]);
    }
  }
  for (int c = 0; c < C; ++c) {
    _mm256_storeu_pd(dw + (o + c) * in + i, lo[c]);
    _mm256_storeu_pd(dw + (o + c) * in + i + 4, hi[c]);
  }
}

void gemm_tn_avx2(const double* dy, const double* x, double* dw, std::size_t rows, std::size_t in,
                  std::size_t out) {
  for (std::size_t r0 = 0; r0 < rows; r0 += kRowBlock * 8) {
    const std::size_t n = r0 + kRowBlock * 8 < rows ? kRowBlock * 8 : rows - r0;
    const double* dyb = dy + r0 * out;
    const double* xb = x + r0 * in;
    std::size_t o = 0;
    for (; o + 4 <= out; o += 4) {
      std::size_t i = 0;
      for (; i + 8 <= in; i += 8) tn_tile<4>(dyb, xb, dw, n, in, out, o, i);
      for (; i < in; ++i) {
        for (std::size_t c = o; c < o + 4; ++c) {
          double s = dw[c * in + i];
          for (std::size_t r = 0; r < n; ++r) s = std::fma(dyb[r * out + c], xb[r * in + i], s);
          dw[c * in + i] = s;
        }
      }
    }
    for (; o < out; ++o) {
      std::size_t i = 0;
      for (; i + 8 <= in; i += 8) tn_tile<1>(dyb, xb, dw, n, in, out, o, i);
      for (; i < in; ++i) {
        double s = dw[o * in + i];
        for (std::size_t r = 0; r < n; ++r) s = std::fma(dyb[r * out + o], xb[r * in + i], s);
        dw[o * in + i] = s;
      }
    }
  }
}

void adam_avx2(double* p, const double* g, double* m, double* v, std::size_t n,
               const AdamCoeffs& c) {
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d b1c = _mm256_set1_pd(1.0 - c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d b2c = _mm256_set1_pd(1.0 - c.beta2);
  const __m256d bc1 = _mm256_set1_pd(c.bias_correction1);
  const __m256d bc2 = _mm256_set1_pd(c.bias_correction2);
  const __m256d lr = _mm256_set1_pd(c.lr);
  const __m256d eps = _mm256_set1_pd(c.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    const __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)),
                                     _mm256_mul_pd(b1c, gv));
    const __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(b2c, _mm256_mul_pd(gv, gv)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_div_pd(mv, bc1);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_div_pd(vv, bc2)), eps);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, mhat), denom);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
  }
  for (; i < n; ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * (g[i] * g[i]);
    const double mhat = m[i] / c.bias_correction1;
    const double vhat = v[i] / c.bias_correction2;
    p[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

void gather_dot_avx2(const double* a, std::size_t stride, const std::uint32_t* idx, std::size_t n,
                     const double* x, std::size_t len, double* out) {
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    dot4(x, a + idx[j] * stride, a + idx[j + 1] * stride, a + idx[j + 2] * stride,
         a + idx[j + 3] * stride, len, out + j);
  }
  for (; j < n; ++j) out[j] = dot_avx2(a + idx[j] * stride, x, len);
}

void gather_axpy_avx2(const double* a, std::size_t stride, const std::uint32_t* idx,
                      const double* coef, std::size_t n, double* y, std::size_t len) {
  std::size_t k = 0;
  for (; k + 16 <= len; k += 16) {
    __m256d y0 = _mm256_loadu_pd(y + k), y1 = _mm256_loadu_pd(y + k + 4);
    __m256d y2 = _mm256_loadu_pd(y + k + 8), y3 = _mm256_loadu_pd(y + k + 12);
    for (std::size_t j = 0; j < n; ++j) {
      const double* row = a + idx[j] * stride + k;
      const __m256d c = _mm256_set1_pd(coef[j]);
      y0 = _mm256_fmadd_pd(c, _mm256_loadu_pd(row), y0);
      y1 = _mm256_fmadd_pd(c, _mm256_loadu_pd(row + 4), y1);
      y2 = _mm256_fmadd_pd(c, _mm256_loadu_pd(row + 8), y2);
      y3 = _mm256_fmadd_pd(c, _mm256_loadu_pd(row + 12), y3);
    }
    _mm256_storeu_pd(y + k, y0);
    _mm256_storeu_pd(y + k + 4, y1);
    _mm256_storeu_pd(y + k + 8, y2);
    _mm256_storeu_pd(y + k + 12, y3);
  }
  if (k < len) {
    for (std::size_t j = 0; j < n; ++j) axpy_avx2(coef[j], a + idx[j] * stride + k, y + k, len - k);
  }
}

void scatter_axpy_avx2(double* a, std::size_t stride, const std::uint32_t* idx, const double* coef,
                       std::size_t n, const double* x, std::size_t len) {
  for (std::size_t j = 0; j < n; ++j) axpy_avx2(coef[j], x, a + idx[j] * stride, len);
}

}  // namespace

const KernelTable& avx2_table_impl() {
  static const KernelTable table{"avx2",          dot_avx2,         axpy_avx2,
                                 gemm_nt_avx2,    gemm_nn_avx2,     gemm_tn_avx2,
                                 adam_avx2,       gather_dot_avx2,  gather_axpy_avx2,
                                 scatter_axpy_avx2};
  return table;
}

}  // namespace dsdf::kernels
