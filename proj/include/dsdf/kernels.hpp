#pragma once
// Dense double-precision kernels used by the network substrate.
//
// Every kernel has a portable scalar reference implementation; on x86-64
// an AVX2/FMA variant is compiled separately and picked at runtime when the
// CPU supports it. Set DSDF_KERNELS=scalar in the environment to force the
// reference path (useful for cross-machine reproducibility).
//
// Layout conventions (all row-major):
//   x  : rows x in      w : out x in      y : rows x out

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace dsdf::kernels {

struct AdamCoeffs {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  const char* name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y = x * w^T   (overwrites y)
  void (*gemm_nt)(const double* x, const double* w, double* y, std::size_t rows,
                  std::size_t in, std::size_t out);
  // dx = dy * w   (overwrites dx)
  void (*gemm_nn)(const double* dy, const double* w, double* dx, std::size_t rows,
                  std::size_t in, std::size_t out);
  // dw += dy^T * x
  void (*gemm_tn)(const double* dy, const double* x, double* dw, std::size_t rows,
                  std::size_t in, std::size_t out);
  void (*adam)(double* param, const double* grad, double* m, double* v, std::size_t n,
               const AdamCoeffs& c);
  // Indexed row operations on a row-major matrix a (row i starts at a + i * stride):
  // out[j] = a[idx[j]] . x
  void (*gather_dot)(const double* a, std::size_t stride, const std::uint32_t* idx, std::size_t n,
                     const double* x, std::size_t len, double* out);
  // y += sum_j coef[j] * a[idx[j]]
  void (*gather_axpy)(const double* a, std::size_t stride, const std::uint32_t* idx,
                      const double* coef, std::size_t n, double* y, std::size_t len);
  // a[idx[j]] += coef[j] * x   (indices must be distinct)
  void (*scatter_axpy)(double* a, std::size_t stride, const std::uint32_t* idx, const double* coef,
                       std::size_t n, const double* x, std::size_t len);
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled in or the CPU lacks the features.
const KernelTable* avx2_table();

// The table every caller in the library goes through.
const KernelTable& active();

// Selects "scalar", "avx2" or "auto". Returns false if the request cannot be
// honoured (the active table is left unchanged).
bool select(std::string_view name);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}

}  // namespace dsdf::kernels
