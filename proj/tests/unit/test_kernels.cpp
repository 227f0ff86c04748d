#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "gdas/kernels.hpp"
#include "gdas/rng.hpp"

namespace gdas::kernels {
namespace {

std::vector<double> randv(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

struct RestoreBackend {
  Backend saved = active_backend();
  ~RestoreBackend() { select_backend(saved); }
};

// Sizes straddle the 4-wide and 8-wide unrolled bodies and their tails.
const std::size_t kSizes[] = {0, 1, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 101, 1000};

class KernelEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!backend_available(Backend::avx2)) GTEST_SKIP() << "AVX2 not available";
  }
#if defined(GDAS_HAVE_AVX2)
  const KernelTable& ref = scalar::table();
  const KernelTable& simd = avx2::table();
#else
  const KernelTable& ref = scalar::table();
  const KernelTable& simd = scalar::table();
#endif
};

// FMA contraction and reassociation may change the last bits only.
void expect_close(const std::vector<double>& a, const std::vector<double>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i], b[i], 1e-14 * (1.0 + std::abs(a[i]))) << "at " << i;
  }
}

TEST_F(KernelEquivalence, Elementwise) {
  Rng rng(1);
  for (auto n : kSizes) {
    const auto x = randv(n, rng), y = randv(n, rng);
    std::vector<double> r(n), s(n);
    ref.add(n, x.data(), y.data(), r.data());
    simd.add(n, x.data(), y.data(), s.data());
    EXPECT_EQ(r, s);
    ref.mul(n, x.data(), y.data(), r.data());
    simd.mul(n, x.data(), y.data(), s.data());
    EXPECT_EQ(r, s);
    ref.scale(n, -0.75, x.data(), r.data());
    simd.scale(n, -0.75, x.data(), s.data());
    EXPECT_EQ(r, s);
    ref.relu(n, x.data(), r.data());
    simd.relu(n, x.data(), s.data());
    EXPECT_EQ(r, s);
  }
}

TEST_F(KernelEquivalence, Accumulating) {
  Rng rng(2);
  for (auto n : kSizes) {
    const auto x = randv(n, rng), y = randv(n, rng), base = randv(n, rng);
    auto r = base, s = base;
    ref.axpy(n, 1.3, x.data(), r.data());
    simd.axpy(n, 1.3, x.data(), s.data());
    expect_close(r, s);
    r = s = base;
    ref.mul_acc(n, x.data(), y.data(), r.data());
    simd.mul_acc(n, x.data(), y.data(), s.data());
    expect_close(r, s);
    r = s = base;
    ref.relu_backward(n, x.data(), y.data(), r.data());
    simd.relu_backward(n, x.data(), y.data(), s.data());
    EXPECT_EQ(r, s);
  }
}

TEST_F(KernelEquivalence, Reductions) {
  Rng rng(3);
  for (auto n : kSizes) {
    const auto x = randv(n, rng), y = randv(n, rng);
    double abs_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) abs_sum += std::abs(x[i] * y[i]) + std::abs(x[i]);
    EXPECT_NEAR(ref.dot(n, x.data(), y.data()), simd.dot(n, x.data(), y.data()), 1e-14 * (1 + abs_sum));
    EXPECT_NEAR(ref.sum(n, x.data()), simd.sum(n, x.data()), 1e-14 * (1 + abs_sum));
  }
}

TEST(Kernels, ReluTreatsZeroAndNegativeZeroAsInactive) {
  RestoreBackend restore;
  const double x[] = {0.0, -0.0, 1e-300, -1e-300};
  const double g[] = {1.0, 1.0, 1.0, 1.0};
  for (auto b : {Backend::scalar, Backend::avx2}) {
    if (!backend_available(b)) continue;
    select_backend(b);
    double gx[4] = {};
    active().relu_backward(4, x, g, gx);
    EXPECT_EQ(gx[0], 0.0);
    EXPECT_EQ(gx[1], 0.0);
    EXPECT_EQ(gx[2], 1.0);
    EXPECT_EQ(gx[3], 0.0);
  }
}

TEST(Kernels, NanPropagatesThroughSum) {
  RestoreBackend restore;
  std::vector<double> v(9, 1.0);
  v[8] = std::nan("");
  for (auto b : {Backend::scalar, Backend::avx2}) {
    if (!backend_available(b)) continue;
    select_backend(b);
    EXPECT_TRUE(std::isnan(sum(v)));
  }
}

// Naive triple loops as the oracle for the three gemm layouts.
TEST(Kernels, GemmLayoutsMatchNaiveProducts) {
  RestoreBackend restore;
  Rng rng(4);
  for (auto b : {Backend::scalar, Backend::avx2}) {
    if (!backend_available(b)) continue;
    select_backend(b);
    for (std::size_t m : {1u, 3u, 6u}) {
      for (std::size_t n : {1u, 5u, 9u}) {
        for (std::size_t k : {1u, 4u, 7u}) {
          const auto a = randv(m * k, rng), bm = randv(k * n, rng);
          std::vector<double> c(m * n, 0.5), want(m * n, 0.5);
          gemm_acc(m, n, k, a.data(), bm.data(), c.data());
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
              for (std::size_t p = 0; p < k; ++p) want[i * n + j] += a[i * k + p] * bm[p * n + j];
          expect_close(want, c);

          const auto a2 = randv(m * k, rng), b2 = randv(m * n, rng);
          std::vector<double> c2(k * n, 0.0), want2(k * n, 0.0);
          gemm_tn_acc(m, n, k, a2.data(), b2.data(), c2.data());
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j)
              for (std::size_t i = 0; i < m; ++i) want2[p * n + j] += a2[i * k + p] * b2[i * n + j];
          expect_close(want2, c2);

          const auto a3 = randv(m * n, rng), b3 = randv(k * n, rng);
          std::vector<double> c3(m * k, 0.0), want3(m * k, 0.0);
          gemm_nt_acc(m, n, k, a3.data(), b3.data(), c3.data());
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p)
              for (std::size_t j = 0; j < n; ++j) want3[i * k + p] += a3[i * n + j] * b3[p * n + j];
          expect_close(want3, c3);
        }
      }
    }
  }
}

TEST(Kernels, SpanFrontEndsRejectMismatchedSizes) {
  std::vector<double> a(3), b(4);
  EXPECT_THROW(axpy(1.0, a, b), std::invalid_argument);
  EXPECT_THROW(dot(a, b), std::invalid_argument);
}

TEST(Kernels, BackendSelectionRoundTrips) {
  RestoreBackend restore;
  select_backend(Backend::scalar);
  EXPECT_EQ(active_backend(), Backend::scalar);
  EXPECT_EQ(backend_name(Backend::scalar), "scalar");
}

}  // namespace
}  // namespace gdas::kernels
