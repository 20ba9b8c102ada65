#pragma once

#include <cstddef>
#include <span>

#include "kspdiff/tensor.hpp"

namespace kspdiff {

// Complex inputs are compared on magnitudes. The reference comes first.

/// ||y - y_hat||^2 / ||y||^2
double nmse(std::span<const double> y, std::span<const double> y_hat);
double nmse(const ComplexTensor& y, const ComplexTensor& y_hat);

/// Mean squared error of the magnitudes.
double mse(std::span<const double> y, std::span<const double> y_hat);

/// 10 log10(y_max^2 / MSE), y_max the reference maximum. Identical inputs
/// give +infinity (see is_perfect_psnr).
double psnr(std::span<const double> y, std::span<const double> y_hat);
double psnr(const ComplexTensor& y, const ComplexTensor& y_hat);
bool is_perfect_psnr(double db);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  /// c = k * y_max instead of (k * y_max)^2
  bool unsquared_constants = false;
  /// Dynamic range; <= 0 means the reference maximum magnitude.
  double data_range = 0.0;
};

/// Mean structural similarity over all fully contained Gaussian windows.
double ssim(std::span<const double> y, std::span<const double> y_hat, std::size_t rows, std::size_t cols,
            const SsimOptions& opt = {});
double ssim(const ComplexTensor& y, const ComplexTensor& y_hat, const SsimOptions& opt = {});

}  // namespace kspdiff
