#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "kspdiff/diffusion.hpp"
#include "kspdiff/error.hpp"
#include "kspdiff/rng.hpp"
#include "diffusion_oracle.hpp"
#include "test_util.hpp"

using namespace kspdiff;

TEST(Schedule, LinearEndpointsAndProducts) {
  const auto s = make_schedule(100);
  EXPECT_DOUBLE_EQ(s.beta(1), 1e-4);
  EXPECT_DOUBLE_EQ(s.beta(100), 0.02);
  EXPECT_DOUBLE_EQ(s.alpha_bar(0), 1.0);
  double ab = 1.0;
  for (int t = 1; t <= 100; ++t) {
    EXPECT_DOUBLE_EQ(s.alpha(t), 1.0 - s.beta(t));
    ab *= s.alpha(t);
    EXPECT_NEAR(s.alpha_bar(t), ab, 1e-15);
  }
  EXPECT_EQ(s.sigma_q_sq(1), 0.0);
  EXPECT_THROW(s.beta(101), InvalidArgument);
  EXPECT_THROW(make_schedule(1), InvalidArgument);
  EXPECT_THROW(make_schedule(10, 0.1, 0.01), InvalidArgument);
}

TEST(Schedule, JsonRoundTrip) {
  const auto s = make_schedule(50, 2e-4, 0.03);
  const auto r = NoiseSchedule::from_json(s.to_json());
  EXPECT_EQ(r.T(), 50);
  EXPECT_DOUBLE_EQ(r.alpha_bar(37), s.alpha_bar(37));
}

TEST(Diffusion, SmallNoiseLimit) {
  const auto s = make_schedule(100);
  const auto y0 = ktest::random_tensor({8, 8}, 1);
  const auto eps = ktest::random_tensor({8, 8}, 2);
  // sqrt(beta_1) = 0.01 of noise on a same-scale signal
  EXPECT_LT(ktest::rel_diff(sample_yt(y0, 1, eps, s), y0), 2e-2);
  EXPECT_EQ(sample_yt(y0, 0, eps, s), y0);
}

TEST(Diffusion, IteratedStepsMatchClosedFormMonteCarlo) {
  const auto s = make_schedule(100);
  const int t = 50;
  const std::size_t n = 10000;
  Rng rng(77);
  std::normal_distribution<double> g;
  ComplexTensor y0({n});
  for (auto& v : y0.data()) v = cplx(1.0, -0.5);
  ComplexTensor y = y0;
  for (int k = 1; k <= t; ++k) {
    ComplexTensor e({n});
    for (auto& v : e.data()) {
      const double re = g(rng);
      v = cplx(re, g(rng));
    }
    y = forward_step(y, k, e, s);
  }
  const double ab = s.alpha_bar(t);
  double m_re = 0, m_im = 0;
  for (const auto& v : y.data()) {
    m_re += v.real();
    m_im += v.imag();
  }
  m_re /= n;
  m_im /= n;
  double v_re = 0, v_im = 0;
  for (const auto& v : y.data()) {
    v_re += (v.real() - m_re) * (v.real() - m_re);
    v_im += (v.imag() - m_im) * (v.imag() - m_im);
  }
  v_re /= n - 1;
  v_im /= n - 1;
  // four standard errors
  const double se_mean = std::sqrt((1 - ab) / n), se_var = std::sqrt(2.0 / n);
  EXPECT_NEAR(m_re, std::sqrt(ab) * 1.0, 4 * se_mean);
  EXPECT_NEAR(m_im, std::sqrt(ab) * -0.5, 4 * se_mean);
  EXPECT_NEAR(v_re, 1 - ab, 4 * se_var * (1 - ab));
  EXPECT_NEAR((v_re + v_im) / 2, 1 - ab, 4 * se_var / std::sqrt(2.0) * (1 - ab));
}


TEST(Diffusion, PosteriorMatchesGridBayes) {
  const auto sch = make_schedule(100);
  const std::vector<std::tuple<int, double, double>> cases{{2, 0.7, 0.69}, {10, -0.4, 0.1}, {50, 1.2, 0.3}, {100, 0.5, -1.1}};
  for (const auto& [t, y0, yt] : cases) {
    const auto [gm, gv] = ktest::grid_posterior(sch, y0, yt, t, t - 1);
    const auto p = posterior_params(ComplexTensor({1}, {cplx(yt, 0)}), ComplexTensor({1}, {cplx(y0, 0)}), t, sch);
    EXPECT_NEAR(p.mean[0].real(), gm, 1e-8) << "t=" << t;
    EXPECT_NEAR(p.variance, gv, 1e-8) << "t=" << t;
  }
}

TEST(Diffusion, StridedPosteriorMatchesGridBayes) {
  const auto sch = make_schedule(100);
  for (auto [t, s] : std::vector<std::pair<int, int>>{{50, 25}, {100, 75}, {25, 1}}) {
    const auto [gm, gv] = ktest::grid_posterior(sch, 0.8, 0.2, t, s);
    const auto p = posterior_between(ComplexTensor({1}, {cplx(0.2, 0)}), ComplexTensor({1}, {cplx(0.8, 0)}), t, s, sch);
    EXPECT_NEAR(p.mean[0].real(), gm, 1e-8);
    EXPECT_NEAR(p.variance, gv, 1e-8);
  }
  // jumping all the way to step 0 returns y0 with no spread
  const auto p0 = posterior_between(ComplexTensor({1}, {cplx(0.2, 0)}), ComplexTensor({1}, {cplx(0.8, 0)}), 25, 0, sch);
  EXPECT_NEAR(p0.mean[0].real(), 0.8, 1e-15);
  EXPECT_NEAR(p0.variance, 0.0, 1e-15);
}

TEST(Diffusion, MuFromPredictionIsBitExact) {
  const auto sch = make_schedule(100);
  const auto yt = ktest::random_tensor({6, 6}, 3);
  const auto y0 = ktest::random_tensor({6, 6}, 4);
  for (int t : {2, 17, 100}) EXPECT_EQ(mu_from_prediction(yt, y0, t, sch), posterior_params(yt, y0, t, sch).mean);
  EXPECT_THROW(posterior_params(yt, y0, 1, sch), InvalidArgument);
}

TEST(Diffusion, EpsAndY0ConversionsInvert) {
  const auto sch = make_schedule(100);
  const auto y0 = ktest::random_tensor({5, 5}, 5);
  const auto eps = ktest::random_tensor({5, 5}, 6);
  for (int t : {1, 30, 100}) {
    const auto yt = sample_yt(y0, t, eps, sch);
    EXPECT_LT(ktest::rel_diff(eps_y0_convert(yt, eps, t, sch, ConvertDirection::kEpsToY0), y0), 1e-12);
    EXPECT_LT(ktest::rel_diff(eps_y0_convert(yt, y0, t, sch, ConvertDirection::kY0ToEps), eps), 1e-10);
  }
  EXPECT_THROW(eps_y0_convert(y0, y0, 0, sch, ConvertDirection::kY0ToEps), NumericalError);
}

TEST(Diffusion, SampleBetweenComposes) {
  const auto sch = make_schedule(100);
  // variance of y_s given y_0 via the jump equals 1 - abar_s
  const double ab_t = sch.alpha_bar(20), ab_s = sch.alpha_bar(45);
  const double r = ab_s / ab_t;
  EXPECT_NEAR(r * (1 - ab_t) + (1 - r), 1 - ab_s, 1e-15);
  const auto y = ktest::random_tensor({3, 3}, 8);
  EXPECT_THROW(sample_between(y, 10, 10, y, sch), InvalidArgument);
}

TEST(Diffusion, LossWeightFormula) {
  const auto sch = make_schedule(100);
  for (int t : {2, 40, 100}) {
    const double a = sch.alpha(t), ab = sch.alpha_bar(t), ab1 = sch.alpha_bar(t - 1);
    const double sq = (1 - a) * (1 - ab1) / (1 - ab);
    EXPECT_NEAR(loss_weight(t, sch), (1 / (2 * sq)) * (1 - a) * (1 - a) / ((1 - ab) * a), 1e-12);
  }
  EXPECT_THROW(loss_weight(1, sch), InvalidArgument);
}
