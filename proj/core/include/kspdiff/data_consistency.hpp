#pragma once

#include <memory>

#include "kspdiff/masks.hpp"
#include "kspdiff/phantom.hpp"
#include "kspdiff/tensor.hpp"

namespace kspdiff {

enum class DcMode {
  /// Orthogonal projection onto {x : mask . F(S x) = measured}, solved per
  /// image row after an inverse transform along the fully sampled axis.
  kExact,
  /// Replace acquired columns of every coil's k-space, then coil-combine.
  /// Idempotent only for a single coil.
  kCoilReplace,
};

struct DcOptions {
  DcMode mode = DcMode::kExact;
  /// Constrain the complement of the mask instead (the set-inverted variant).
  bool inverted = false;
};

/// Precomputed data-consistency operator for one (sensitivities, mask) pair.
class DcProjector {
 public:
  DcProjector(const SensitivityMaps& sens, const SamplingMask& mask, DcOptions opt = {});
  ~DcProjector();
  DcProjector(DcProjector&&) noexcept;
  DcProjector& operator=(DcProjector&&) noexcept;

  /// measured_ks: [coils, rows, cols]; values off the constrained columns are ignored.
  ComplexTensor project(const ComplexTensor& x, const ComplexTensor& measured_ks) const;

  /// Linear part of the projection (what it does to a perturbation). Self-adjoint,
  /// so it is also the backward map of project() with respect to x.
  ComplexTensor project_linear(const ComplexTensor& g) const;

  const SamplingMask& constrained() const noexcept { return constrained_; }
  const DcOptions& options() const noexcept { return opt_; }

 private:
  struct Rows;
  SensitivityMaps sens_;
  SamplingMask constrained_;
  DcOptions opt_;
  std::unique_ptr<Rows> rows_;
};

/// One-shot projection; builds a DcProjector internally.
ComplexTensor dc_project(const ComplexTensor& pred_img, const ComplexTensor& measured_ks,
                         const SensitivityMaps& sens, const SamplingMask& mask, DcOptions opt = {});

}  // namespace kspdiff
