#include "kspdiff/objectives.hpp"

#include <cmath>
#include <sstream>

#include "kspdiff/encoding.hpp"
#include "kspdiff/error.hpp"
#include "kspdiff/fft.hpp"

namespace kspdiff {
namespace {

void check_score(double d, const char* what) {
  if (!(d > 0.0 && d < 1.0))
    throw InvalidArgument(std::string(what) + " score " + std::to_string(d) + " outside (0, 1)");
}

std::size_t upsilon_count(const ComplexTensor& t, const SamplingMask& upsilon) {
  if (t.cols() != upsilon.width) throw InvalidArgument("upsilon mask width does not match tensor columns");
  const std::size_t n = t.planes() * t.rows() * upsilon.count();
  if (n == 0) throw InvalidArgument("upsilon pattern is empty");
  return n;
}

}  // namespace

double disc_loss(std::span<const double> d_real, std::span<const double> d_fake,
                 std::span<const double> penalty) {
  if (d_real.empty() || d_real.size() != d_fake.size() || d_real.size() != penalty.size())
    throw InvalidArgument("disc_loss needs equal, non-empty batches");
  double acc = 0.0;
  for (std::size_t i = 0; i < d_real.size(); ++i) {
    check_score(d_real[i], "real");
    check_score(d_fake[i], "fake");
    if (!(penalty[i] >= 0.0)) throw InvalidArgument("gradient penalty must be non-negative");
    acc += -std::log(d_real[i]) - std::log1p(-d_fake[i]) + 0.5 * penalty[i];
  }
  return acc / static_cast<double>(d_real.size());
}

double disc_loss(double d_real, double d_fake, double penalty) {
  return disc_loss(std::span(&d_real, 1), std::span(&d_fake, 1), std::span(&penalty, 1));
}

double gen_loss(std::span<const double> d_fake) {
  if (d_fake.empty()) throw InvalidArgument("gen_loss needs a non-empty batch");
  double acc = 0.0;
  for (double d : d_fake) {
    check_score(d, "fake");
    acc -= std::log(d);
  }
  return acc / static_cast<double>(d_fake.size());
}

double gen_loss(double d_fake) { return gen_loss(std::span(&d_fake, 1)); }

ReconLoss recon_loss_upsilon_grad(const ComplexTensor& eps_true, const ComplexTensor& eps_pred,
                                  const SamplingMask& upsilon, int t, const NoiseSchedule& sched,
                                  LossDomain domain, const SensitivityMaps* sens) {
  require_same_shape(eps_true, eps_pred, "recon_loss_upsilon");
  const std::size_t retained = upsilon_count(eps_pred, upsilon);
  const double w = loss_weight(t, sched);
  const double scale = w / static_cast<double>(retained);

  // residual restricted to upsilon, in k-space
  const ComplexTensor rk = apply_mask(fft2c_planes(eps_pred - eps_true), upsilon);
  ReconLoss out;
  if (domain == LossDomain::kKSpace || !sens || eps_pred.rank() != 3) {
    out.value = scale * squared_norm(rk);
    out.grad_pred = 2.0 * scale * ifft2c_planes(rk);
    return out;
  }
  // coil-combined image-domain residual r = S^H F^H P F d; grad = 2 F^H P F S r
  const ComplexTensor r = combine_coils(ifft2c_planes(rk), *sens);
  out.value = scale * squared_norm(r);
  out.grad_pred = 2.0 * scale * ifft2c_planes(apply_mask(fft2c_planes(expand_coils(r, *sens)), upsilon));
  return out;
}

double recon_loss_upsilon(const ComplexTensor& eps_true, const ComplexTensor& eps_pred,
                          const SamplingMask& upsilon, int t, const NoiseSchedule& sched, LossDomain domain,
                          const SensitivityMaps* sens) {
  return recon_loss_upsilon_grad(eps_true, eps_pred, upsilon, t, sched, domain, sens).value;
}

double total_loss(double l_upsilon, double l_d, double l_g, double lambda) {
  return l_upsilon + lambda * (l_d + l_g);
}

std::string LossReport::csv_header() { return "step,t,l_upsilon,l_d,l_g,l_final,slice"; }

std::string LossReport::csv_row() const {
  std::ostringstream os;
  os.precision(10);
  os << step << ',' << t << ',' << l_upsilon << ',' << l_d << ',' << l_g << ',' << l_final << ',' << slice;
  return os.str();
}

}  // namespace kspdiff
