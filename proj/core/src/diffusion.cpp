#include "kspdiff/diffusion.hpp"

#include <cmath>

#include "kspdiff/error.hpp"

namespace kspdiff {
namespace {

ComplexTensor axpby(double a, const ComplexTensor& x, double b, const ComplexTensor& y) {
  require_same_shape(x, y, "diffusion");
  ComplexTensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
  return out;
}

}  // namespace

NoiseSchedule::NoiseSchedule(int T, double beta_1, double beta_T)
    : T_(T), beta_1_(beta_1), beta_T_(beta_T) {
  if (T < 2) throw InvalidArgument("schedule needs T >= 2");
  if (!(beta_1 > 0.0 && beta_1 <= beta_T && beta_T < 1.0))
    throw InvalidArgument("schedule needs 0 < beta_1 <= beta_T < 1");

  const auto n = static_cast<std::size_t>(T) + 1;
  beta_.assign(n, 0.0);
  alpha_.assign(n, 1.0);
  alpha_bar_.assign(n, 1.0);
  sigma_q_sq_.assign(n, 0.0);
  for (int t = 1; t <= T; ++t) {
    beta_[t] = beta_1 + (beta_T - beta_1) * static_cast<double>(t - 1) / static_cast<double>(T - 1);
    alpha_[t] = 1.0 - beta_[t];
    alpha_bar_[t] = alpha_bar_[t - 1] * alpha_[t];
    sigma_q_sq_[t] = (1.0 - alpha_[t]) * (1.0 - alpha_bar_[t - 1]) / (1.0 - alpha_bar_[t]);
  }
}

int NoiseSchedule::check(int t) const {
  if (t < 0 || t > T_) throw InvalidArgument("diffusion step " + std::to_string(t) + " outside [0, T]");
  return t;
}

nlohmann::json NoiseSchedule::to_json() const {
  return {{"T", T_}, {"beta_1", beta_1_}, {"beta_T", beta_T_}, {"kind", "linear"}};
}

NoiseSchedule NoiseSchedule::from_json(const nlohmann::json& j) {
  if (j.value("kind", "linear") != "linear") throw InvalidArgument("only linear schedules are supported");
  return NoiseSchedule(j.at("T").get<int>(), j.at("beta_1").get<double>(), j.at("beta_T").get<double>());
}

NoiseSchedule make_schedule(int T, double beta_1, double beta_T) {
  return NoiseSchedule(T, beta_1, beta_T);
}

ComplexTensor forward_step(const ComplexTensor& y_prev, int t, const ComplexTensor& eps,
                           const NoiseSchedule& sched) {
  if (t < 1) throw InvalidArgument("forward_step needs t >= 1");
  const double b = sched.beta(t);
  return axpby(std::sqrt(1.0 - b), y_prev, std::sqrt(b), eps);
}

ComplexTensor sample_yt(const ComplexTensor& y0, int t, const ComplexTensor& eps,
                        const NoiseSchedule& sched) {
  const double ab = sched.alpha_bar(t);
  return axpby(std::sqrt(ab), y0, std::sqrt(1.0 - ab), eps);
}

ComplexTensor sample_between(const ComplexTensor& y_t, int t, int s, const ComplexTensor& eps,
                             const NoiseSchedule& sched) {
  if (s <= t) throw InvalidArgument("sample_between needs s > t");
  const double ratio = sched.alpha_bar(s) / sched.alpha_bar(t);
  return axpby(std::sqrt(ratio), y_t, std::sqrt(1.0 - ratio), eps);
}

PosteriorCoefficients posterior_coefficients(int t, int s, const NoiseSchedule& sched) {
  if (s < 0 || s >= t) throw InvalidArgument("posterior needs 0 <= s < t");
  const double ab_t = sched.alpha_bar(t);
  const double ab_s = sched.alpha_bar(s);
  // single steps use the stored alpha_t rather than the ratio abar_t / abar_{t-1}
  const bool single = s + 1 == t;
  const double a_ts = single ? sched.alpha(t) : ab_t / ab_s;
  const double b_ts = single ? sched.beta(t) : 1.0 - a_ts;
  const double denom = 1.0 - ab_t;
  PosteriorCoefficients c;
  c.c_yt = std::sqrt(a_ts) * (1.0 - ab_s) / denom;
  c.c_y0 = std::sqrt(ab_s) * b_ts / denom;
  c.variance = single ? sched.sigma_q_sq(t) : b_ts * (1.0 - ab_s) / denom;
  return c;
}

Posterior posterior_between(const ComplexTensor& y_t, const ComplexTensor& y0, int t, int s,
                            const NoiseSchedule& sched) {
  const auto c = posterior_coefficients(t, s, sched);
  Posterior p;
  p.mean = axpby(c.c_yt, y_t, c.c_y0, y0);
  p.variance = c.variance;
  return p;
}

Posterior posterior_params(const ComplexTensor& y_t, const ComplexTensor& y0, int t,
                           const NoiseSchedule& sched) {
  if (t < 2 || t > sched.T()) throw InvalidArgument("posterior_params needs 2 <= t <= T");
  return posterior_between(y_t, y0, t, t - 1, sched);
}

ComplexTensor mu_from_prediction(const ComplexTensor& y_t, const ComplexTensor& y0_hat, int t,
                                 const NoiseSchedule& sched) {
  return posterior_params(y_t, y0_hat, t, sched).mean;
}

ComplexTensor eps_y0_convert(const ComplexTensor& y_t, const ComplexTensor& value, int t,
                             const NoiseSchedule& sched, ConvertDirection direction) {
  const double ab = sched.alpha_bar(t);
  if (direction == ConvertDirection::kEpsToY0) {
    return axpby(1.0 / std::sqrt(ab), y_t, -std::sqrt(1.0 - ab) / std::sqrt(ab), value);
  }
  if (!(ab < 1.0)) throw NumericalError("cannot recover eps at a step with alpha_bar == 1");
  const double s = std::sqrt(1.0 - ab);
  return axpby(1.0 / s, y_t, -std::sqrt(ab) / s, value);
}

double loss_weight(int t, const NoiseSchedule& sched) {
  if (t < 2 || t > sched.T()) throw InvalidArgument("loss_weight needs 2 <= t <= T");
  const double a = sched.alpha(t);
  const double ab = sched.alpha_bar(t);
  return (1.0 / (2.0 * sched.sigma_q_sq(t))) * (1.0 - a) * (1.0 - a) / ((1.0 - ab) * a);
}

}  // namespace kspdiff
