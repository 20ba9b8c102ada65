#include <gtest/gtest.h>

#include "kspdiff/encoding.hpp"
#include "kspdiff/error.hpp"
#include "kspdiff/fft.hpp"
#include "kspdiff/masks.hpp"
#include "kspdiff/phantom.hpp"
#include "test_util.hpp"

using namespace kspdiff;

TEST(Sensitivities, NormalizedEverywhere) {
  for (std::size_t c : {1u, 2u, 4u, 8u}) {
    const auto s = generate_sensitivities(c, 32, 24, 3);
    EXPECT_EQ(s.maps.shape(), (Shape{c, 32, 24}));
    EXPECT_LT(s.normalization_error(), 1e-12);
  }
}

TEST(Sensitivities, SingleCoilIsExactlyOne) {
  const auto s = generate_sensitivities(1, 16, 16, 9);
  for (const auto& v : s.maps.data()) EXPECT_EQ(v, cplx(1.0, 0.0));
}

TEST(Encoding, AdjointInnerProduct) {
  for (std::uint64_t d = 0; d < 10; ++d) {
    const auto sens = generate_sensitivities(4, 32, 32, 100 + d);
    const auto mask = make_random_mask(32, 4.0, 0.08, 200 + d);
    const EncodingOperator op(sens, mask);
    const auto x = ktest::random_tensor({32, 32}, 300 + d);
    const auto y = ktest::random_tensor({4, 32, 32}, 400 + d);
    const cplx lhs = inner(encode(x, op), y);
    const cplx rhs = inner(x, encode_adjoint(y, op));
    EXPECT_LT(std::abs(lhs - rhs), 1e-10 * std::abs(lhs)) << "draw " << d;
  }
}

TEST(Encoding, UnsampledColumnsAreZero) {
  const auto sens = generate_sensitivities(2, 16, 16, 1);
  const auto mask = make_random_mask(16, 4.0, 0.125, 2);
  const auto k = encode(ktest::random_tensor({16, 16}, 3), EncodingOperator(sens, mask));
  for (std::size_t i = 0; i < k.size(); ++i)
    if (!mask[i % 16]) EXPECT_EQ(k[i], cplx(0.0, 0.0));
}

TEST(Encoding, FullMaskZeroFilledRecoversImage) {
  const auto sens = generate_sensitivities(4, 24, 24, 5);
  const auto x = ktest::random_tensor({24, 24}, 6);
  const EncodingOperator op(sens, SamplingMask::full(24));
  EXPECT_LT(ktest::rel_diff(zero_filled(encode(x, op), op), x), 1e-12);
}

TEST(Encoding, SingleCoilMatchesPlainFft) {
  const auto x = ktest::random_tensor({16, 16}, 7);
  const auto mask = make_random_mask(16, 2.0, 0.125, 8);
  const auto k = encode(x, EncodingOperator(SensitivityMaps::unit(16, 16), mask));
  const auto ref = apply_mask(fft2c(x), mask);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(std::abs(k[i] - ref[i]), 0.0, 1e-12);
}

TEST(Encoding, CombineIsAdjointOfExpand) {
  const auto sens = generate_sensitivities(3, 12, 12, 9);
  const auto x = ktest::random_tensor({12, 12}, 10);
  const auto v = ktest::random_tensor({3, 12, 12}, 11);
  const cplx lhs = inner(expand_coils(x, sens), v);
  const cplx rhs = inner(x, combine_coils(v, sens));
  EXPECT_LT(std::abs(lhs - rhs), 1e-12 * std::abs(lhs));
}

TEST(Encoding, NoiseOnlyOnSampledColumns) {
  const auto mask = make_random_mask(16, 4.0, 0.125, 12);
  const ComplexTensor y({2, 16, 16});
  const auto noisy = add_measurement_noise(y, mask, 0.5, 13);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!mask[i % 16]) EXPECT_EQ(noisy[i], cplx(0.0, 0.0));
    changed += noisy[i] != cplx(0.0, 0.0);
  }
  EXPECT_EQ(changed, 2 * 16 * mask.count());
  EXPECT_EQ(add_measurement_noise(y, mask, 0.0, 13), y);
  EXPECT_EQ(add_measurement_noise(y, mask, 0.5, 13), noisy);
}

TEST(Encoding, ShapeErrors) {
  const auto sens = generate_sensitivities(2, 16, 16, 1);
  EXPECT_THROW(EncodingOperator(sens, SamplingMask::full(12)), InvalidArgument);
  const EncodingOperator op(sens, SamplingMask::full(16));
  EXPECT_THROW(encode(ComplexTensor({16, 12}), op), InvalidArgument);
  EXPECT_THROW(encode_adjoint(ComplexTensor({3, 16, 16}), op), InvalidArgument);
}
