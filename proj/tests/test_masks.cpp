#include <gtest/gtest.h>

#include <cmath>

#include "kspdiff/error.hpp"
#include "kspdiff/masks.hpp"
#include "kspdiff/rng.hpp"

using namespace kspdiff;

TEST(Masks, CenterFractionFourPercent) {
  // 4% of 100 columns is four lines, the count the center block must hold.
  EXPECT_EQ(center_line_count(100, 0.04), 4u);
  const auto m = make_random_mask(100, 4.0, 0.04, 1);
  EXPECT_EQ(m.center_count(), 4u);
  for (std::size_t c = m.center_lo; c < m.center_hi; ++c) EXPECT_TRUE(m[c]);
  EXPECT_TRUE(m.is_center(50));
}

TEST(Masks, RateOneIsFull) {
  const auto m = make_random_mask(64, 1.0, 0.04, 3);
  EXPECT_EQ(m.count(), 64u);
}

TEST(Masks, OuterAcceptanceMatchesBinomial) {
  // p = (W/R - n_c) / (W - n_c); pooled over many seeds the accepted
  // count must sit within 4 binomial standard deviations.
  const std::size_t W = 128;
  for (double R : {2.0, 4.0, 8.0}) {
    const std::size_t nc = center_line_count(W, 0.04);
    const double p = (W / R - nc) / static_cast<double>(W - nc);
    std::size_t hits = 0, trials = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
      const auto m = make_random_mask(W, R, 0.04, s);
      hits += m.count() - m.center_count();
      trials += W - nc;
    }
    const double mean = p * trials, sd = std::sqrt(trials * p * (1 - p));
    EXPECT_LT(std::abs(hits - mean), 4 * sd) << "R=" << R;
  }
}

TEST(Masks, DeterministicAndNested) {
  const auto a = make_random_mask(64, 4.0, 0.04, 9);
  EXPECT_EQ(a, make_random_mask(64, 4.0, 0.04, 9));
  const auto b = make_random_mask(64, 2.0, 0.04, 9);
  for (std::size_t c = 0; c < 64; ++c)
    if (a[c]) EXPECT_TRUE(b[c]);
}

TEST(Masks, Errors) {
  EXPECT_THROW(make_random_mask(64, 0.5, 0.04, 1), InvalidArgument);
  EXPECT_THROW(make_random_mask(64, 4.0, 0.0, 1), InvalidArgument);
  EXPECT_THROW(make_random_mask(64, 40.0, 0.25, 1), InvalidArgument);
  const auto m = make_random_mask(64, 4.0, 0.04, 1);
  EXPECT_THROW(partition_mask(m, 0.0, 1), InvalidArgument);
  EXPECT_THROW(partition_mask(m, 1.0, 1), InvalidArgument);
  SamplingMask center_only = SamplingMask::full(16, 4);
  for (std::size_t c = 0; c < 16; ++c) center_only.sampled[c] = center_only.is_center(c);
  EXPECT_THROW(partition_mask(center_only, 0.5, 1), InvalidArgument);
}

TEST(Partition, DisjointExceptCenterAndCovering) {
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    const std::size_t W = std::vector<std::size_t>{64, 128, 256}[i % 3];
    const double R = std::vector<double>{2, 4, 8}[(i / 3) % 3];
    const double rho = std::vector<double>{0.3, 0.5, 0.7}[(i / 9) % 3];
    const auto omega = make_random_mask(W, R, 0.04, rng());
    const auto p = partition_mask(omega, rho, rng());
    std::size_t outer = 0, aleph_outer = 0;
    for (std::size_t c = 0; c < W; ++c) {
      EXPECT_EQ(p.aleph[c] || p.upsilon[c], omega[c]);
      EXPECT_EQ(p.aleph[c] && p.upsilon[c], omega.is_center(c));
      outer += omega[c] && !omega.is_center(c);
      aleph_outer += p.aleph[c] && !omega.is_center(c);
    }
    EXPECT_LE(std::abs(static_cast<double>(aleph_outer) - rho * static_cast<double>(outer)), 1.0);
  }
}

TEST(Partition, AlephOverUpsilonMode) {
  const auto omega = make_random_mask(256, 2.0, 0.04, 17);
  const auto p = partition_mask(omega, 0.5, 3, RhoMode::kAlephOverUpsilon);
  const double a = static_cast<double>(p.aleph.count() - p.aleph.center_count());
  const double u = static_cast<double>(p.upsilon.count() - p.upsilon.center_count());
  EXPECT_NEAR(a / u, 0.5, 0.05);
}

TEST(Partition, FreshSeedsGiveDifferentSplits) {
  const auto omega = make_random_mask(128, 4.0, 0.04, 2);
  EXPECT_NE(partition_mask(omega, 0.5, 1).aleph, partition_mask(omega, 0.5, 2).aleph);
  EXPECT_EQ(partition_mask(omega, 0.5, 1).aleph, partition_mask(omega, 0.5, 1).aleph);
}

TEST(Masks, ApplyZeroesUnsampledColumns) {
  const auto m = make_random_mask(16, 4.0, 0.125, 4);
  ComplexTensor k({2, 3, 16});
  for (auto& v : k.data()) v = cplx(1, 1);
  const auto r = apply_mask(k, m);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(r[i], m[i % 16] ? cplx(1, 1) : cplx(0, 0));
  EXPECT_THROW(apply_mask(ComplexTensor({3, 8}), m), InvalidArgument);
}

TEST(Masks, JsonRoundTrip) {
  const auto omega = make_random_mask(64, 4.0, 0.04, 8);
  EXPECT_EQ(mask_from_json(to_json(omega)), omega);
  const auto p = partition_mask(omega, 0.3, 4);
  const auto q = partition_from_json(to_json(p));
  EXPECT_EQ(q.aleph, p.aleph);
  EXPECT_EQ(q.upsilon, p.upsilon);
  EXPECT_EQ(q.omega, p.omega);
  EXPECT_EQ(q.seed, p.seed);
  EXPECT_DOUBLE_EQ(q.rho, p.rho);
}
