#include "kspdiff/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "kspdiff/error.hpp"

namespace kspdiff {

std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

ComplexTensor::ComplexTensor(Shape shape) : shape_(std::move(shape)) {
  for (auto e : shape_)
    if (e == 0) throw InvalidArgument("tensor extents must be positive: " + shape_to_string(shape_));
  data_.assign(shape_numel(shape_), cplx{});
}

ComplexTensor::ComplexTensor(Shape shape, std::vector<cplx> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto e : shape_)
    if (e == 0) throw InvalidArgument("tensor extents must be positive: " + shape_to_string(shape_));
  if (data_.size() != shape_numel(shape_))
    throw InvalidArgument("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_to_string(shape_));
}

std::size_t ComplexTensor::rows() const {
  if (rank() < 2) throw InvalidArgument("tensor has no row dimension");
  return shape_[rank() - 2];
}

std::size_t ComplexTensor::cols() const {
  if (rank() < 1) throw InvalidArgument("tensor has no column dimension");
  return shape_.back();
}

std::size_t ComplexTensor::planes() const {
  if (rank() < 2) throw InvalidArgument("tensor is not at least 2-D");
  return size() / (rows() * cols());
}

std::span<cplx> ComplexTensor::plane(std::size_t p) {
  const std::size_t n = rows() * cols();
  return std::span<cplx>(data_).subspan(p * n, n);
}

std::span<const cplx> ComplexTensor::plane(std::size_t p) const {
  const std::size_t n = rows() * cols();
  return std::span<const cplx>(data_).subspan(p * n, n);
}

void require_same_shape(const ComplexTensor& a, const ComplexTensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw InvalidArgument(std::string(what) + ": shape mismatch " + shape_to_string(a.shape()) +
                          " vs " + shape_to_string(b.shape()));
}

ComplexTensor& ComplexTensor::operator+=(const ComplexTensor& o) {
  require_same_shape(*this, o, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

ComplexTensor& ComplexTensor::operator-=(const ComplexTensor& o) {
  require_same_shape(*this, o, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

ComplexTensor& ComplexTensor::operator*=(cplx s) {
  for (auto& v : data_) v *= s;
  return *this;
}

bool ComplexTensor::all_finite() const noexcept {
  for (const auto& v : data_)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

ComplexTensor operator+(ComplexTensor a, const ComplexTensor& b) { return a += b; }
ComplexTensor operator-(ComplexTensor a, const ComplexTensor& b) { return a -= b; }
ComplexTensor operator*(cplx s, ComplexTensor a) { return a *= s; }

cplx inner(const ComplexTensor& a, const ComplexTensor& b) {
  require_same_shape(a, b, "inner");
  cplx acc{};
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
  return acc;
}

double squared_norm(const ComplexTensor& t) {
  double acc = 0.0;
  for (const auto& v : t.data()) acc += std::norm(v);
  return acc;
}

double norm2(const ComplexTensor& t) { return std::sqrt(squared_norm(t)); }

std::vector<double> magnitudes(const ComplexTensor& t) {
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = std::abs(t[i]);
  return out;
}

}  // namespace kspdiff
