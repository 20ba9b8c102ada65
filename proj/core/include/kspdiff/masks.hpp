#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "kspdiff/tensor.hpp"

namespace kspdiff {

/// 1-D Cartesian sampling pattern over phase-encode columns.
struct SamplingMask {
  std::size_t width = 0;
  std::vector<std::uint8_t> sampled;  ///< one flag per column
  std::size_t center_lo = 0;          ///< always-sampled block [center_lo, center_hi)
  std::size_t center_hi = 0;

  bool operator[](std::size_t c) const { return sampled[c] != 0; }
  bool is_center(std::size_t c) const { return c >= center_lo && c < center_hi; }
  std::size_t count() const;
  std::size_t center_count() const { return center_hi - center_lo; }
  std::vector<std::size_t> indices() const;

  static SamplingMask full(std::size_t width, std::size_t n_center = 0);

  friend bool operator==(const SamplingMask&, const SamplingMask&) = default;
};

/// How rho maps to the number of non-center Omega lines sent to the
/// training set.
enum class RhoMode {
  kFractionOfOmega,  ///< |aleph \ center| = rho * |Omega \ center|
  kAlephOverUpsilon, ///< |aleph \ center| / |upsilon \ center| = rho
};

/// Omega split into a training-input pattern (aleph) and a loss pattern
/// (upsilon). Both share the center block and nothing else.
struct MaskPartition {
  SamplingMask omega;
  SamplingMask aleph;
  SamplingMask upsilon;
  double rho = 0.5;
  std::uint64_t seed = 0;
};

std::size_t center_line_count(std::size_t width, double center_fraction);

/// Center block of round(center_fraction*width) columns is always sampled;
/// every other column is drawn with p = (width/R - n_center)/(width - n_center).
SamplingMask make_random_mask(std::size_t width, double R, double center_fraction, std::uint64_t seed);

MaskPartition partition_mask(const SamplingMask& omega, double rho, std::uint64_t seed,
                             RhoMode mode = RhoMode::kFractionOfOmega);

/// Zero every column of the trailing axis whose flag is false.
ComplexTensor apply_mask(const ComplexTensor& ks, const SamplingMask& mask);

nlohmann::json to_json(const SamplingMask& m);
SamplingMask mask_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MaskPartition& p);
MaskPartition partition_from_json(const nlohmann::json& j);

}  // namespace kspdiff
