#include <gtest/gtest.h>

#include <cmath>

#include "gdas/ops.hpp"
#include "primitive_cases.hpp"

namespace gdas {
namespace {

using testing::random_tensor;

class PrimitiveGradients : public ::testing::TestWithParam<testing::PrimitiveCase> {};

TEST_P(PrimitiveGradients, MatchCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(hash_words({seed, 99}));
    auto c = GetParam().make(rng);
    const auto r = testing::grad_check(c.loss, c.inputs);
    EXPECT_LT(r.rel_error, 1e-6) << GetParam().name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(All, PrimitiveGradients, ::testing::ValuesIn(testing::primitive_cases()),
                         [](const auto& info) { return info.param.name; });

// Direct-loop convolution used as the forward oracle.
std::vector<double> naive_conv(const Tensor& x, const Tensor& w, const ops::Conv2dAttrs& a) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto o = w.dim(0), cg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const auto oh = (h + 2 * a.pad_h - a.dilation_h * (kh - 1) - 1) / a.stride_h + 1;
  const auto ow = (wd + 2 * a.pad_w - a.dilation_w * (kw - 1) - 1) / a.stride_w + 1;
  const auto og = o / a.groups;
  std::vector<double> out(n * o * oh * ow, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = 0.0;
          const std::size_t g = oc / og;
          for (std::size_t ic = 0; ic < cg; ++ic)
            for (std::size_t p = 0; p < kh; ++p)
              for (std::size_t q = 0; q < kw; ++q) {
                const long y = static_cast<long>(i * a.stride_h + p * a.dilation_h) - static_cast<long>(a.pad_h);
                const long xx = static_cast<long>(j * a.stride_w + q * a.dilation_w) - static_cast<long>(a.pad_w);
                if (y < 0 || xx < 0 || y >= static_cast<long>(h) || xx >= static_cast<long>(wd)) continue;
                acc += x.at(((b * c + g * cg + ic) * h + y) * wd + xx) *
                       w.at(((oc * cg + ic) * kh + p) * kw + q);
              }
          out[((b * o + oc) * oh + i) * ow + j] = acc;
        }
  (void)c;
  return out;
}

TEST(Ops, ConvMatchesDirectLoops) {
  Rng rng(5);
  const ops::Conv2dAttrs cases[] = {
      ops::Conv2dAttrs::square(1, 1), ops::Conv2dAttrs::square(2, 1), ops::Conv2dAttrs::square(1, 2, 2),
      ops::Conv2dAttrs{1, 2, 0, 1, 1, 1, 1}, ops::Conv2dAttrs{1, 1, 1, 1, 1, 1, 4}};
  for (const auto& a : cases) {
    const auto x = random_tensor({2, 4, 7, 6}, rng, -1, 1, false);
    const auto w = random_tensor({4, 4 / a.groups, 3, 3}, rng, -1, 1, false);
    const auto y = ops::conv2d(x, w, a);
    const auto want = naive_conv(x, w, a);
    ASSERT_EQ(y.numel(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(y.at(i), want[i], 1e-12);
  }
}

TEST(Ops, ConvShapeErrors) {
  const auto x = Tensor::zeros({1, 3, 4, 4});
  EXPECT_THROW(ops::conv2d(x, Tensor::zeros({2, 2, 3, 3}), {}), ShapeError);
  EXPECT_THROW(ops::conv2d(x, Tensor::zeros({2, 3, 5, 5}), {}), ShapeError);
}

TEST(Ops, AvgPoolExcludesPadding) {
  const auto x = Tensor::full({1, 1, 2, 2}, 4.0);
  const auto y = ops::avg_pool2d(x, {3, 1, 1});
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 4.0);
}

TEST(Ops, MaxPoolTieGoesToFirstElement) {
  auto x = Tensor::from({1, 1, 1, 3}, {5.0, 5.0, 1.0}, true);
  backward(ops::sum(ops::max_pool2d(x, {3, 1, 1})));
  // Three windows all see the tied pair; the first of each window wins.
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 1.0);
  EXPECT_EQ(x.grad()[2], 0.0);
}

TEST(Ops, BatchNormNormalizesPerChannel) {
  Rng rng(6);
  const auto x = random_tensor({4, 3, 3, 3}, rng, -5, 5, false);
  const auto y = ops::batch_norm(x, Tensor(), Tensor());
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t p = 0; p < 9; ++p) m += y.at((n * 3 + c) * 9 + p);
    m /= 36;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t p = 0; p < 9; ++p) v += std::pow(y.at((n * 3 + c) * 9 + p) - m, 2);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 36, 1.0, 1e-3);
  }
}

TEST(Ops, SoftmaxRowsSumToOneAndSurviveLargeLogits) {
  const auto x = Tensor::from({2, 3}, {1000.0, 0.0, -1000.0, 1.0, 2.0, 3.0});
  const auto p = ops::softmax(x);
  EXPECT_NEAR(p.at(0) + p.at(1) + p.at(2), 1.0, 1e-15);
  EXPECT_NEAR(p.at(3) + p.at(4) + p.at(5), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(p.at(0), 1.0);
  const auto lp = ops::log_softmax(x);
  EXPECT_TRUE(std::isfinite(lp.at(2)));
  EXPECT_DOUBLE_EQ(lp.at(2), -2000.0);
}

TEST(Ops, NllRejectsOutOfRangeLabels) {
  const auto lp = ops::log_softmax(Tensor::zeros({2, 3}));
  const int bad[] = {0, 3};
  EXPECT_THROW(ops::nll(lp, bad), std::invalid_argument);
  const int neg[] = {-1, 0};
  EXPECT_THROW(ops::nll(lp, neg), std::invalid_argument);
}

TEST(Ops, StraightThroughValueIsHardAndGradientIsPassedThrough) {
  auto soft = Tensor::from({3}, {0.2, 0.5, 0.3}, true);
  const double hard[] = {0.0, 1.0, 0.0};
  const auto st = ops::straight_through(hard, soft);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(st.at(i), hard[i]);
  const auto r = Tensor::from({3}, {1.0, -2.0, 3.0});
  backward(ops::sum(ops::mul(st, r)));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(soft.grad()[i], r.at(i));
}

TEST(Ops, ScaleByGradientReachesOnlyTheIndexedWeight) {
  auto x = Tensor::from({2}, {1.0, 2.0}, true);
  auto w = Tensor::from({3}, {0.1, 0.2, 0.3}, true);
  backward(ops::sum(ops::scale_by(x, w, 1)));
  EXPECT_EQ(w.grad()[0], 0.0);
  EXPECT_DOUBLE_EQ(w.grad()[1], 3.0);
  EXPECT_EQ(w.grad()[2], 0.0);
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.2);
}

TEST(Ops, ShiftAndConcatLayout) {
  const auto x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto s = ops::shift2d(x, 1, 1);
  EXPECT_EQ(std::vector<double>(s.data().begin(), s.data().end()), (std::vector<double>{4, 0, 0, 0}));
  const Tensor parts[] = {x, s};
  const auto c = ops::concat_channels(parts);
  EXPECT_EQ(c.shape(), (Shape{1, 2, 2, 2}));
  EXPECT_EQ(c.at(4), 4.0);
}

TEST(Ops, PooledExtent) {
  EXPECT_EQ(ops::pooled_extent(8, 3, 2, 1), 4u);
  EXPECT_EQ(ops::pooled_extent(7, 3, 2, 1), 4u);
  EXPECT_EQ(ops::pooled_extent(8, 3, 1, 1), 8u);
  EXPECT_EQ(ops::pooled_extent(8, 3, 1, 2, 2), 8u);
}

}  // namespace
}  // namespace gdas
