#pragma once

#include <cstdint>
#include <vector>

#include "kspdiff/tensor.hpp"

namespace kspdiff {

/// Ellipse in normalized coordinates: the image spans [-1, 1] on both axes,
/// x along columns and y along rows.
struct Ellipse {
  double cx = 0.0;
  double cy = 0.0;
  double semi_x = 1.0;
  double semi_y = 1.0;
  double angle = 0.0;  ///< radians, counter-clockwise
  double intensity = 1.0;
};

/// Additive superposition of ellipses, clipped to [0, 1], zero imaginary part.
ComplexTensor render_ellipses(std::size_t rows, std::size_t cols, const std::vector<Ellipse>& ellipses);

/// Random ellipses for a phantom. The first one is a centered "head"
/// outline; the rest are interior structures with signed intensities.
std::vector<Ellipse> random_ellipses(std::size_t n_ellipses, std::uint64_t seed);

/// Deterministic in (rows, cols, n_ellipses, seed). Requires rows, cols >= 16
/// and n_ellipses >= 1.
ComplexTensor generate_phantom(std::size_t rows, std::size_t cols, std::size_t n_ellipses,
                               std::uint64_t seed);

/// Coil sensitivities [coils, rows, cols]. Every pixel belongs to the support,
/// so sum_c |S_c|^2 == 1 everywhere.
struct SensitivityMaps {
  ComplexTensor maps;

  std::size_t coils() const { return maps.shape().at(0); }
  std::size_t rows() const { return maps.shape().at(1); }
  std::size_t cols() const { return maps.shape().at(2); }

  /// max over pixels of |sum_c |S_c|^2 - 1|
  double normalization_error() const;

  static SensitivityMaps unit(std::size_t rows, std::size_t cols);
};

/// Smooth Gaussian-profile coils centered on a circle outside the field of
/// view, each with a slowly varying phase, then normalized per pixel.
SensitivityMaps generate_sensitivities(std::size_t n_coils, std::size_t rows, std::size_t cols,
                                       std::uint64_t seed);

}  // namespace kspdiff
