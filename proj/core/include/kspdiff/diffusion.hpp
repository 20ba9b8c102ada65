#pragma once

#include <vector>

#include "json.hpp"
#include "kspdiff/tensor.hpp"

namespace kspdiff {

/// Linear beta schedule and its derived tables. Arrays are indexed by the
/// step t = 0..T; index 0 holds the alpha_bar_0 = 1 convention.
class NoiseSchedule {
 public:
  NoiseSchedule(int T, double beta_1, double beta_T);

  int T() const noexcept { return T_; }
  double beta_1() const noexcept { return beta_1_; }
  double beta_T() const noexcept { return beta_T_; }

  double beta(int t) const { return beta_.at(check(t)); }
  double alpha(int t) const { return alpha_.at(check(t)); }
  double alpha_bar(int t) const { return alpha_bar_.at(check(t)); }
  /// Variance of q(y_{t-1} | y_t, y_0); zero at t = 1.
  double sigma_q_sq(int t) const { return sigma_q_sq_.at(check(t)); }

  nlohmann::json to_json() const;
  static NoiseSchedule from_json(const nlohmann::json& j);

 private:
  int check(int t) const;

  int T_;
  double beta_1_, beta_T_;
  std::vector<double> beta_, alpha_, alpha_bar_, sigma_q_sq_;
};

NoiseSchedule make_schedule(int T, double beta_1 = 1e-4, double beta_T = 0.02);

/// y_t = sqrt(1 - beta_t) y_{t-1} + sqrt(beta_t) eps, real and imaginary
/// parts diffused independently.
ComplexTensor forward_step(const ComplexTensor& y_prev, int t, const ComplexTensor& eps,
                           const NoiseSchedule& sched);

/// Closed-form y_t = sqrt(abar_t) y0 + sqrt(1 - abar_t) eps. t = 0 returns y0.
ComplexTensor sample_yt(const ComplexTensor& y0, int t, const ComplexTensor& eps,
                        const NoiseSchedule& sched);

/// Jump y_t -> y_s for s > t via q(y_s | y_t).
ComplexTensor sample_between(const ComplexTensor& y_t, int t, int s, const ComplexTensor& eps,
                             const NoiseSchedule& sched);

struct Posterior {
  ComplexTensor mean;
  double variance = 0.0;
};

/// mean = c_yt * y_t + c_y0 * y0
struct PosteriorCoefficients {
  double c_yt = 0.0;
  double c_y0 = 0.0;
  double variance = 0.0;
};

PosteriorCoefficients posterior_coefficients(int t, int s, const NoiseSchedule& sched);

/// q(y_{t-1} | y_t, y0); requires 2 <= t <= T.
Posterior posterior_params(const ComplexTensor& y_t, const ComplexTensor& y0, int t,
                           const NoiseSchedule& sched);

/// q(y_s | y_t, y0) for 0 <= s < t. s == t-1 reproduces posterior_params exactly.
Posterior posterior_between(const ComplexTensor& y_t, const ComplexTensor& y0, int t, int s,
                            const NoiseSchedule& sched);

/// Model mean with the network's estimate of y0 substituted for the truth.
ComplexTensor mu_from_prediction(const ComplexTensor& y_t, const ComplexTensor& y0_hat, int t,
                                 const NoiseSchedule& sched);

enum class ConvertDirection { kEpsToY0, kY0ToEps };

/// Moves between the noise and clean-image parameterizations at step t.
ComplexTensor eps_y0_convert(const ComplexTensor& y_t, const ComplexTensor& value, int t,
                             const NoiseSchedule& sched, ConvertDirection direction);

/// Weight of the upsilon reconstruction loss at step t:
///   (1 / (2 sigma_q^2(t))) * (1 - alpha_t)^2 / ((1 - abar_t) alpha_t)
double loss_weight(int t, const NoiseSchedule& sched);

}  // namespace kspdiff
