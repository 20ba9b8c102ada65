#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "kspdiff/diffusion.hpp"
#include "kspdiff/masks.hpp"
#include "kspdiff/phantom.hpp"
#include "kspdiff/tensor.hpp"

namespace kspdiff {

inline constexpr double kDefaultLambda = 0.1;

/// Batch mean of -log D(real) - log(1 - D(fake)) + 0.5 * ||grad_x D||^2.
double disc_loss(std::span<const double> d_real, std::span<const double> d_fake,
                 std::span<const double> input_grad_sq_norm);
double disc_loss(double d_real, double d_fake, double input_grad_sq_norm);

/// Batch mean of -log D(fake).
double gen_loss(std::span<const double> d_fake);
double gen_loss(double d_fake);

/// Where the upsilon-restricted residual is measured.
enum class LossDomain {
  kKSpace,  ///< squared norm of the upsilon k-space columns
  kImage,   ///< squared norm of the upsilon-zero-filled residual image (coil-combined when maps are given)
};

struct ReconLoss {
  double value = 0.0;
  ComplexTensor grad_pred;  ///< dL/dRe + i dL/dIm with respect to eps_pred
};

/// loss_weight(t) * ||P_upsilon F (eps_true - eps_pred)||^2 / retained, where
/// F acts on every 2-D plane and `retained` counts the kept complex samples.
/// Tensors may be single images or coil stacks.
double recon_loss_upsilon(const ComplexTensor& eps_true, const ComplexTensor& eps_pred,
                          const SamplingMask& upsilon, int t, const NoiseSchedule& sched,
                          LossDomain domain = LossDomain::kKSpace, const SensitivityMaps* sens = nullptr);

ReconLoss recon_loss_upsilon_grad(const ComplexTensor& eps_true, const ComplexTensor& eps_pred,
                                  const SamplingMask& upsilon, int t, const NoiseSchedule& sched,
                                  LossDomain domain = LossDomain::kKSpace,
                                  const SensitivityMaps* sens = nullptr);

double total_loss(double l_upsilon, double l_d, double l_g, double lambda = kDefaultLambda);

struct LossReport {
  std::int64_t step = 0;
  int t = 0;
  std::uint64_t slice = 0;
  double l_upsilon = 0.0;
  double l_d = 0.0;
  double l_g = 0.0;
  double l_final = 0.0;

  static std::string csv_header();
  std::string csv_row() const;
};

}  // namespace kspdiff
