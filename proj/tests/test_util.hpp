#pragma once

#include <random>

#include "kspdiff/rng.hpp"
#include "kspdiff/tensor.hpp"

namespace ktest {

using namespace kspdiff;

inline ComplexTensor random_tensor(const Shape& shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  ComplexTensor t(shape);
  for (auto& v : t.data()) {
    const double re = g(rng);
    v = cplx(re, g(rng));
  }
  return t;
}

inline double rel_diff(const ComplexTensor& a, const ComplexTensor& b) {
  const double d = norm2(a - b);
  const double s = std::max(norm2(a), norm2(b));
  return s > 0 ? d / s : d;
}

}  // namespace ktest
