#pragma once

// Dense double-precision inner loops used by the tensor engine. Every kernel
// has a portable scalar reference; an AVX2/FMA variant is chosen at runtime
// when the CPU supports it. Set GDAS_KERNELS=scalar in the environment (or
// call select_backend) to force the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace gdas::kernels {

enum class Backend { scalar, avx2 };

struct KernelTable {
  // y += a * x
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  double (*dot)(std::size_t n, const double* x, const double* y);
  double (*sum)(std::size_t n, const double* x);
  // out = a + b
  void (*add)(std::size_t n, const double* a, const double* b, double* out);
  // out = a * b
  void (*mul)(std::size_t n, const double* a, const double* b, double* out);
  // out += a * b
  void (*mul_acc)(std::size_t n, const double* a, const double* b, double* out);
  // out = a * x
  void (*scale)(std::size_t n, double a, const double* x, double* out);
  // out = max(x, 0)
  void (*relu)(std::size_t n, const double* x, double* out);
  // gx += (x > 0) ? g : 0
  void (*relu_backward)(std::size_t n, const double* x, const double* g, double* gx);
};

namespace scalar {
const KernelTable& table();
}
#if defined(GDAS_HAVE_AVX2)
namespace avx2 {
const KernelTable& table();
}
#endif

bool backend_available(Backend backend);
// Throws std::invalid_argument when the backend is not available here.
void select_backend(Backend backend);
Backend active_backend();
std::string_view backend_name(Backend backend);
const KernelTable& active();

// Span front-ends over the active table. Sizes must agree.
void axpy(double a, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> x, std::span<const double> y);
double sum(std::span<const double> x);
void add(std::span<const double> a, std::span<const double> b, std::span<double> out);
void mul(std::span<const double> a, std::span<const double> b, std::span<double> out);
void mul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out);
void scale(double a, std::span<const double> x, std::span<double> out);

// Row-major products built on axpy/dot.
// c[m x n] += a[m x k] * b[k x n]
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
              double* c);
// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c);
// c[m x k] += a[m x n] * b[k x n]^T
void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c);

}  // namespace gdas::kernels
