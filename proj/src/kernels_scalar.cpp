#include "dsdf/kernels.hpp"

#include <cmath>

namespace dsdf::kernels {
namespace {

constexpr std::size_t kRowBlock = 32;

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void gemm_nt_scalar(const double* x, const double* w, double* y, std::size_t rows,
                    std::size_t in, std::size_t out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * in;
    double* yr = y + r * out;
    for (std::size_t o = 0; o < out; ++o) yr[o] = dot_scalar(xr, w + o * in, in);
  }
}

void gemm_nn_scalar(const double* dy, const double* w, double* dx, std::size_t rows,
                    std::size_t in, std::size_t out) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* dxr = dx + r * in;
    for (std::size_t k = 0; k < in; ++k) dxr[k] = 0.0;
    const double* dyr = dy + r * out;
    for (std::size_t o = 0; o < out; ++o) {
      if (dyr[o] != 0.0) axpy_scalar(dyr[o], w + o * in, dxr, in);
    }
  }
}

void gemm_tn_scalar(const double* dy, const double* x, double* dw, std::size_t rows,
                    std::size_t in, std::size_t out) {
  for (std::size_t r0 = 0; r0 < rows; r0 += kRowBlock) {
    const std::size_t r1 = r0 + kRowBlock < rows ? r0 + kRowBlock : rows;
    for (std::size_t o = 0; o < out; ++o) {
      double* dwo = dw + o * in;
      for (std::size_t r = r0; r < r1; ++r) {
        const double g = dy[r * out + o];
        if (g != 0.0) axpy_scalar(g, x + r * in, dwo, in);
      }
    }
  }
}

void adam_scalar(double* p, const double* g, double* m, double* v, std::size_t n,
                 const AdamCoeffs& c) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * (g[i] * g[i]);
    const double mhat = m[i] / c.bias_correction1;
    const double vhat = v[i] / c.bias_correction2;
    p[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

void gather_dot_scalar(const double* a, std::size_t stride, const std::uint32_t* idx, std::size_t n,
                       const double* x, std::size_t len, double* out) {
  for (std::size_t j = 0; j < n; ++j) out[j] = dot_scalar(a + idx[j] * stride, x, len);
}

void gather_axpy_scalar(const double* a, std::size_t stride, const std::uint32_t* idx,
                        const double* coef, std::size_t n, double* y, std::size_t len) {
  for (std::size_t j = 0; j < n; ++j) axpy_scalar(coef[j], a + idx[j] * stride, y, len);
}

void scatter_axpy_scalar(double* a, std::size_t stride, const std::uint32_t* idx, const double* coef,
                         std::size_t n, const double* x, std::size_t len) {
  for (std::size_t j = 0; j < n; ++j) axpy_scalar(coef[j], x, a + idx[j] * stride, len);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar",          dot_scalar,         axpy_scalar,
                                 gemm_nt_scalar,    gemm_nn_scalar,     gemm_tn_scalar,
                                 adam_scalar,       gather_dot_scalar,  gather_axpy_scalar,
                                 scatter_axpy_scalar};
  return table;
}

}  // namespace dsdf::kernels
