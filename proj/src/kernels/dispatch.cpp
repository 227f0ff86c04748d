#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "gdas/kernels.hpp"

namespace gdas::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(GDAS_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& table_for(Backend backend) {
#if defined(GDAS_HAVE_AVX2)
  if (backend == Backend::avx2) return avx2::table();
#endif
  (void)backend;
  return scalar::table();
}

Backend initial_backend() {
  if (const char* env = std::getenv("GDAS_KERNELS")) {
    if (std::string(env) == "scalar") return Backend::scalar;
  }
  return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

struct State {
  std::atomic<Backend> backend{initial_backend()};
  std::atomic<const KernelTable*> table{&table_for(backend.load())};
};

State& state() {
  static State s;
  return s;
}

void check_sizes(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string("kernels::") + what + ": size mismatch " +
                                std::to_string(a) + " vs " + std::to_string(b));
  }
}

}  // namespace

bool backend_available(Backend backend) {
  return backend == Backend::scalar || cpu_has_avx2();
}

void select_backend(Backend backend) {
  if (!backend_available(backend)) {
    throw std::invalid_argument("kernel backend not available: " +
                                std::string(backend_name(backend)));
  }
  state().backend.store(backend);
  state().table.store(&table_for(backend));
}

Backend active_backend() { return state().backend.load(); }

std::string_view backend_name(Backend backend) {
  return backend == Backend::avx2 ? "avx2" : "scalar";
}

const KernelTable& active() { return *state().table.load(std::memory_order_relaxed); }

void axpy(double a, std::span<const double> x, std::span<double> y) {
  check_sizes(x.size(), y.size(), "axpy");
  active().axpy(x.size(), a, x.data(), y.data());
}

double dot(std::span<const double> x, std::span<const double> y) {
  check_sizes(x.size(), y.size(), "dot");
  return active().dot(x.size(), x.data(), y.data());
}

double sum(std::span<const double> x) { return active().sum(x.size(), x.data()); }

void add(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  check_sizes(a.size(), b.size(), "add");
  check_sizes(a.size(), out.size(), "add");
  active().add(a.size(), a.data(), b.data(), out.data());
}

void mul(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  check_sizes(a.size(), b.size(), "mul");
  check_sizes(a.size(), out.size(), "mul");
  active().mul(a.size(), a.data(), b.data(), out.data());
}

void mul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  check_sizes(a.size(), b.size(), "mul_acc");
  check_sizes(a.size(), out.size(), "mul_acc");
  active().mul_acc(a.size(), a.data(), b.data(), out.data());
}

void scale(double a, std::span<const double> x, std::span<double> out) {
  check_sizes(x.size(), out.size(), "scale");
  active().scale(x.size(), a, x.data(), out.data());
}

void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
              double* c) {
  const auto& t = active();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      t.axpy(n, arow[p], b + p * n, crow);
    }
  }
}

void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c) {
  const auto& t = active();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      t.axpy(n, arow[p], brow, c + p * n);
    }
  }
}

void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c) {
  const auto& t = active();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) crow[p] += t.dot(n, arow, b + p * n);
  }
}

}  // namespace gdas::kernels
