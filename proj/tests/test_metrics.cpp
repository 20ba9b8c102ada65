#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "kspdiff/error.hpp"
#include "kspdiff/metrics.hpp"
#include "test_util.hpp"

using namespace kspdiff;

TEST(Nmse, HandValues) {
  const std::vector<double> y{3.0, 4.0};
  EXPECT_DOUBLE_EQ(nmse(y, std::vector<double>{0.0, 0.0}), 1.0);
  EXPECT_DOUBLE_EQ(nmse(y, std::vector<double>{3.0, 0.0}), 0.64);
  EXPECT_DOUBLE_EQ(nmse(y, y), 0.0);
}

TEST(Nmse, ComplexUsesMagnitudes) {
  ComplexTensor a({1, 2}), b({1, 2});
  a[0] = cplx(0, 3);
  a[1] = 4.0;
  b[0] = -3.0;
  b[1] = cplx(0, -4);
  EXPECT_DOUBLE_EQ(nmse(a, b), 0.0);
}

TEST(Psnr, HandValues) {
  const std::vector<double> y{1.0, 0.0}, yh{0.9, 0.1};
  EXPECT_NEAR(mse(y, yh), 0.01, 1e-15);
  EXPECT_NEAR(psnr(y, yh), 20.0, 1e-10);
  const double p = psnr(y, y);
  EXPECT_TRUE(std::isinf(p));
  EXPECT_TRUE(is_perfect_psnr(p));
  EXPECT_FALSE(is_perfect_psnr(20.0));
}

TEST(Metrics, Errors) {
  const std::vector<double> z{0.0, 0.0}, a{1.0, 2.0}, b{1.0};
  EXPECT_THROW(nmse(z, a), InvalidArgument);
  EXPECT_THROW(nmse(a, b), InvalidArgument);
  EXPECT_THROW(psnr(z, a), InvalidArgument);
  EXPECT_THROW(ssim(a, a, 1, 2), InvalidArgument);
}

namespace {

void smooth_pair(std::vector<double>& y, std::vector<double>& yh, std::size_t rows, std::size_t cols) {
  y.resize(rows * cols);
  yh.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = std::sin(0.3 * r) + std::cos(0.2 * c) + 2.5;
      y[r * cols + c] = v;
      yh[r * cols + c] = v + 0.3 * std::sin(0.7 * double(r * c) + 1.0);
    }
}

}  // namespace

TEST(Ssim, MatchesReferenceImplementation) {
  // scikit-image structural_similarity(gaussian_weights=True, sigma=1.5,
  // use_sample_covariance=False, data_range=y.max()) on the same pair.
  std::vector<double> y, yh;
  smooth_pair(y, yh, 24, 20);
  EXPECT_NEAR(ssim(y, yh, 24, 20), 0.8440494882389785, 1e-10);
}

TEST(Ssim, ConstantImagesClosedForm) {
  const std::size_t n = 16;
  const double a = 0.8, b = 0.5;
  const std::vector<double> y(n * n, a), yh(n * n, b);
  const double c1 = (0.01 * a) * (0.01 * a);
  EXPECT_NEAR(ssim(y, yh, n, n), (2 * a * b + c1) / (a * a + b * b + c1), 1e-10);
  SsimOptions u;
  u.unsquared_constants = true;
  EXPECT_NEAR(ssim(y, yh, n, n, u), (2 * a * b + 0.01 * a) / (a * a + b * b + 0.01 * a), 1e-10);
}

TEST(Ssim, IdentityAndAnticorrelation) {
  std::vector<double> y, yh;
  smooth_pair(y, yh, 24, 20);
  EXPECT_NEAR(ssim(y, y, 24, 20), 1.0, 1e-12);
  // Contrast-inverted copy; scikit-image gives -0.6760396117226748.
  std::vector<double> inv(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) inv[i] = 5.0 - y[i];
  EXPECT_NEAR(ssim(y, inv, 24, 20), -0.6760396117226748, 1e-10);
}

TEST(Ssim, ScaleInvariantWithAutomaticRange) {
  std::vector<double> y, yh;
  smooth_pair(y, yh, 24, 20);
  const double s0 = ssim(y, yh, 24, 20);
  for (auto& v : y) v *= 7.0;
  for (auto& v : yh) v *= 7.0;
  EXPECT_NEAR(ssim(y, yh, 24, 20), s0, 1e-12);
}

TEST(Ssim, ComplexOverload) {
  const auto a = ktest::random_tensor({16, 16}, 1);
  auto b = a;
  for (auto& v : b.data()) v *= cplx(0, 1);
  EXPECT_NEAR(ssim(a, b), 1.0, 1e-12);
  EXPECT_THROW(ssim(a, ktest::random_tensor({16, 8}, 1)), InvalidArgument);
}
