#include "kspdiff/encoding.hpp"

#include <random>

#include "kspdiff/error.hpp"
#include "kspdiff/fft.hpp"
#include "kspdiff/rng.hpp"

namespace kspdiff {

EncodingOperator::EncodingOperator(SensitivityMaps sens, SamplingMask mask)
    : sens_(std::move(sens)), mask_(std::move(mask)) {
  if (sens_.maps.rank() != 3) throw InvalidArgument("sensitivity maps must be [coils, rows, cols]");
  if (mask_.width != sens_.cols())
    throw InvalidArgument("mask width " + std::to_string(mask_.width) +
                          " does not match sensitivity columns " + std::to_string(sens_.cols()));
}

EncodingOperator EncodingOperator::with_mask(SamplingMask mask) const {
  return EncodingOperator(sens_, std::move(mask));
}

ComplexTensor expand_coils(const ComplexTensor& x, const SensitivityMaps& sens) {
  if (x.rank() != 2 || x.rows() != sens.rows() || x.cols() != sens.cols())
    throw InvalidArgument("expand_coils: image " + shape_to_string(x.shape()) +
                          " does not match sensitivities " + shape_to_string(sens.maps.shape()));
  const std::size_t n = x.size();
  ComplexTensor out({sens.coils(), sens.rows(), sens.cols()});
  for (std::size_t c = 0; c < sens.coils(); ++c)
    for (std::size_t i = 0; i < n; ++i) out[c * n + i] = sens.maps[c * n + i] * x[i];
  return out;
}

ComplexTensor combine_coils(const ComplexTensor& v, const SensitivityMaps& sens) {
  if (v.shape() != sens.maps.shape())
    throw InvalidArgument("combine_coils: coil stack " + shape_to_string(v.shape()) +
                          " does not match sensitivities " + shape_to_string(sens.maps.shape()));
  const std::size_t n = sens.rows() * sens.cols();
  ComplexTensor out({sens.rows(), sens.cols()});
  // fixed coil order keeps the reduction deterministic
  for (std::size_t c = 0; c < sens.coils(); ++c)
    for (std::size_t i = 0; i < n; ++i) out[i] += std::conj(sens.maps[c * n + i]) * v[c * n + i];
  return out;
}

ComplexTensor encode(const ComplexTensor& x, const EncodingOperator& op) {
  return apply_mask(fft2c_planes(expand_coils(x, op.sens())), op.mask());
}

ComplexTensor encode_adjoint(const ComplexTensor& y, const EncodingOperator& op) {
  if (y.shape() != op.sens().maps.shape())
    throw InvalidArgument("encode_adjoint: k-space " + shape_to_string(y.shape()) +
                          " does not match operator " + shape_to_string(op.sens().maps.shape()));
  return combine_coils(ifft2c_planes(apply_mask(y, op.mask())), op.sens());
}

ComplexTensor zero_filled(const ComplexTensor& y, const EncodingOperator& op) {
  return encode_adjoint(y, op);
}

ComplexTensor add_measurement_noise(const ComplexTensor& y, const SamplingMask& mask, double std,
                                    std::uint64_t seed) {
  if (std < 0.0) throw InvalidArgument("noise std must be non-negative");
  if (std == 0.0) return y;
  if (y.cols() != mask.width) throw InvalidArgument("noise mask width mismatch");
  Rng rng(derive_seed(seed, {0x4015e}));
  std::normal_distribution<double> g(0.0, std);
  ComplexTensor out = y;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double re = g(rng), im = g(rng);
    if (mask.sampled[i % mask.width]) out[i] += cplx(re, im);
  }
  return out;
}

}  // namespace kspdiff
