#include <gtest/gtest.h>

#include "kspdiff/data_consistency.hpp"
#include "kspdiff/encoding.hpp"
#include "kspdiff/error.hpp"
#include "kspdiff/fft.hpp"
#include "kspdiff/masks.hpp"
#include "kspdiff/phantom.hpp"
#include "test_util.hpp"

using namespace kspdiff;

namespace {

struct Scene {
  SensitivityMaps sens = generate_sensitivities(4, 32, 32, 5);
  SamplingMask mask = make_random_mask(32, 4.0, 0.08, 9);
  ComplexTensor truth = generate_phantom(32, 32, 6, 2);
  ComplexTensor measured = encode(truth, EncodingOperator(sens, mask));
};

double consistency(const ComplexTensor& x, const Scene& s, const SamplingMask& m) {
  const EncodingOperator op(s.sens, m);
  const auto a = encode(x, op), b = encode(s.truth, op);
  return norm2(a - b) / norm2(b);
}

SamplingMask complement(const SamplingMask& m) {
  SamplingMask c = m;
  for (auto& v : c.sampled) v = !v;
  c.center_lo = c.center_hi = 0;
  return c;
}

}  // namespace

TEST(ExactDc, OutputIsConsistentAndIdempotent) {
  Scene s;
  const DcProjector dc(s.sens, s.mask);
  const auto x = ktest::random_tensor({32, 32}, 1);
  const auto p = dc.project(x, s.measured);
  EXPECT_LT(consistency(p, s, s.mask), 1e-6);
  const auto pp = dc.project(p, s.measured);
  EXPECT_LT(ktest::rel_diff(pp, p), 1e-9);
}

TEST(ExactDc, TruthIsAFixedPoint) {
  Scene s;
  const auto p = dc_project(s.truth, s.measured, s.sens, s.mask);
  EXPECT_LT(ktest::rel_diff(p, s.truth), 1e-9);
}

TEST(ExactDc, IsOrthogonal) {
  // x - P(x) must be orthogonal to every consistent perturbation P_lin(g).
  Scene s;
  const DcProjector dc(s.sens, s.mask);
  const auto x = ktest::random_tensor({32, 32}, 3);
  const auto r = x - dc.project(x, s.measured);
  const auto g = dc.project_linear(ktest::random_tensor({32, 32}, 4));
  EXPECT_LT(std::abs(inner(r, g)), 1e-9 * norm2(r) * norm2(g));
}

TEST(ExactDc, LinearPartIsSelfAdjointProjector) {
  Scene s;
  const DcProjector dc(s.sens, s.mask);
  const auto a = ktest::random_tensor({32, 32}, 5), b = ktest::random_tensor({32, 32}, 6);
  const cplx l = inner(dc.project_linear(a), b), r = inner(a, dc.project_linear(b));
  EXPECT_LT(std::abs(l - r), 1e-9 * norm2(a) * norm2(b));
  const auto pa = dc.project_linear(a);
  EXPECT_LT(ktest::rel_diff(dc.project_linear(pa), pa), 1e-9);
  // project(x) - project(0) = project_linear(x)
  const ComplexTensor zero({32, 32});
  EXPECT_LT(ktest::rel_diff(dc.project(a, s.measured) - dc.project(zero, s.measured), pa), 1e-9);
}

TEST(ExactDc, SingleCoilEqualsColumnReplacement) {
  const auto sens = SensitivityMaps::unit(16, 16);
  const auto mask = make_random_mask(16, 2.0, 0.125, 3);
  const auto truth = ktest::random_tensor({16, 16}, 7);
  const auto measured = encode(truth, EncodingOperator(sens, mask));
  const auto x = ktest::random_tensor({16, 16}, 8);
  ComplexTensor ks = fft2c(x);
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < 16; ++c)
      if (mask[c]) ks.at(r, c) = measured.at(0, r, c);
  const auto expected = ifft2c(ks);
  for (DcMode mode : {DcMode::kExact, DcMode::kCoilReplace})
    EXPECT_LT(ktest::rel_diff(dc_project(x, measured, sens, mask, {mode, false}), expected), 1e-10);
}

TEST(ExactDc, FullMaskReturnsTruth) {
  Scene s;
  const auto full = SamplingMask::full(32);
  const auto measured = encode(s.truth, EncodingOperator(s.sens, full));
  const auto p = dc_project(ktest::random_tensor({32, 32}, 9), measured, s.sens, full);
  EXPECT_LT(ktest::rel_diff(p, s.truth), 1e-9);
}

TEST(CoilReplaceDc, MatchesDefinition) {
  Scene s;
  const auto x = ktest::random_tensor({32, 32}, 10);
  ComplexTensor ks = fft2c_planes(expand_coils(x, s.sens));
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t r = 0; r < 32; ++r)
      for (std::size_t j = 0; j < 32; ++j)
        if (s.mask[j]) ks.at(c, r, j) = s.measured.at(c, r, j);
  const auto expected = combine_coils(ifft2c_planes(ks), s.sens);
  const auto got = dc_project(x, s.measured, s.sens, s.mask, {DcMode::kCoilReplace, false});
  EXPECT_LT(ktest::rel_diff(got, expected), 1e-12);
}

TEST(InvertedDc, ConstrainsComplement) {
  Scene s;
  const auto comp = complement(s.mask);
  const auto full_meas = encode(s.truth, EncodingOperator(s.sens, SamplingMask::full(32)));
  const DcProjector dc(s.sens, s.mask, {DcMode::kExact, true});
  EXPECT_EQ(dc.constrained().sampled, comp.sampled);
  const auto p = dc.project(ktest::random_tensor({32, 32}, 11), full_meas);
  EXPECT_LT(consistency(p, s, comp), 1e-6);
}

TEST(Dc, ShapeErrors) {
  Scene s;
  const DcProjector dc(s.sens, s.mask);
  EXPECT_THROW(dc.project(ktest::random_tensor({16, 16}, 1), s.measured), InvalidArgument);
  EXPECT_THROW(dc.project(s.truth, ktest::random_tensor({4, 16, 32}, 1)), InvalidArgument);
  EXPECT_THROW(DcProjector(s.sens, make_random_mask(16, 2.0, 0.125, 1)), InvalidArgument);
}
