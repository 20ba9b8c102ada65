#pragma once

#include <cstdint>

#include "kspdiff/masks.hpp"
#include "kspdiff/phantom.hpp"
#include "kspdiff/tensor.hpp"

namespace kspdiff {

/// Multi-coil Cartesian encoding A = mask . F . S. Single-coil data uses one
/// unit-sensitivity coil.
class EncodingOperator {
 public:
  EncodingOperator(SensitivityMaps sens, SamplingMask mask);

  const SensitivityMaps& sens() const noexcept { return sens_; }
  const SamplingMask& mask() const noexcept { return mask_; }
  std::size_t coils() const { return sens_.coils(); }
  std::size_t rows() const { return sens_.rows(); }
  std::size_t cols() const { return sens_.cols(); }

  /// Same sensitivities, different mask.
  EncodingOperator with_mask(SamplingMask mask) const;

 private:
  SensitivityMaps sens_;
  SamplingMask mask_;
};

/// Per coil: mask . fft2c(S_c . x). Output [coils, rows, cols]; unsampled
/// columns are exactly zero.
ComplexTensor encode(const ComplexTensor& x, const EncodingOperator& op);

/// sum_c conj(S_c) . ifft2c(mask . y_c)
ComplexTensor encode_adjoint(const ComplexTensor& y, const EncodingOperator& op);

/// Zero-filled SENSE combination of measured k-space.
ComplexTensor zero_filled(const ComplexTensor& y, const EncodingOperator& op);

/// S_c . x for every coil: [rows, cols] -> [coils, rows, cols]
ComplexTensor expand_coils(const ComplexTensor& x, const SensitivityMaps& sens);
/// sum_c conj(S_c) . v_c: [coils, rows, cols] -> [rows, cols]
ComplexTensor combine_coils(const ComplexTensor& v, const SensitivityMaps& sens);

/// Complex Gaussian noise with standard deviation `std` per real component,
/// added only on sampled columns. std == 0 returns y unchanged.
ComplexTensor add_measurement_noise(const ComplexTensor& y, const SamplingMask& mask, double std,
                                    std::uint64_t seed);

}  // namespace kspdiff
