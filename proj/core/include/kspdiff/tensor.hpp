#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace kspdiff {

using cplx = std::complex<double>;
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense complex array in row-major order: a single image [rows, cols],
/// a coil stack [coils, rows, cols], or k-space of either layout.
class ComplexTensor {
 public:
  ComplexTensor() = default;
  explicit ComplexTensor(Shape shape);
  ComplexTensor(Shape shape, std::vector<cplx> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const;  ///< second-to-last extent
  std::size_t cols() const;  ///< last extent
  /// Number of stacked 2-D planes (1 for a plain image).
  std::size_t planes() const;

  std::span<cplx> data() noexcept { return data_; }
  std::span<const cplx> data() const noexcept { return data_; }
  std::vector<cplx>& storage() noexcept { return data_; }

  cplx& operator[](std::size_t i) noexcept { return data_[i]; }
  const cplx& operator[](std::size_t i) const noexcept { return data_[i]; }

  cplx& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const cplx& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  cplx& at(std::size_t p, std::size_t r, std::size_t c) {
    return data_[(p * rows() + r) * cols() + c];
  }
  const cplx& at(std::size_t p, std::size_t r, std::size_t c) const {
    return data_[(p * rows() + r) * cols() + c];
  }

  std::span<cplx> plane(std::size_t p);
  std::span<const cplx> plane(std::size_t p) const;

  ComplexTensor& operator+=(const ComplexTensor& o);
  ComplexTensor& operator-=(const ComplexTensor& o);
  ComplexTensor& operator*=(cplx s);

  bool all_finite() const noexcept;

  friend bool operator==(const ComplexTensor&, const ComplexTensor&) = default;

 private:
  Shape shape_;
  std::vector<cplx> data_;
};

ComplexTensor operator+(ComplexTensor a, const ComplexTensor& b);
ComplexTensor operator-(ComplexTensor a, const ComplexTensor& b);
ComplexTensor operator*(cplx s, ComplexTensor a);

/// Hermitian inner product <a, b> = sum conj(a_i) b_i.
cplx inner(const ComplexTensor& a, const ComplexTensor& b);
double norm2(const ComplexTensor& t);
double squared_norm(const ComplexTensor& t);

/// Elementwise magnitudes, same shape, zero imaginary part.
std::vector<double> magnitudes(const ComplexTensor& t);

void require_same_shape(const ComplexTensor& a, const ComplexTensor& b, const char* what);

}  // namespace kspdiff
