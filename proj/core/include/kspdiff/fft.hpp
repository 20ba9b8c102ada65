#pragma once

#include "kspdiff/tensor.hpp"

namespace kspdiff {

// Centered, orthonormal 2-D DFT: the DC sample sits at index
// (rows/2, cols/2) and both directions are scaled by 1/sqrt(rows*cols), so
// ifft2c is the exact adjoint and inverse of fft2c.

ComplexTensor fft2c(const ComplexTensor& img);
ComplexTensor ifft2c(const ComplexTensor& ks);

/// Apply the transform independently to every 2-D plane of a stacked tensor.
ComplexTensor fft2c_planes(const ComplexTensor& stack);
ComplexTensor ifft2c_planes(const ComplexTensor& stack);

/// Centered orthonormal 1-D inverse DFT along the row axis of each plane
/// (columns left untouched). Used by the row-decoupled data-consistency solve.
ComplexTensor ifft1c_rows(const ComplexTensor& stack);

}  // namespace kspdiff
