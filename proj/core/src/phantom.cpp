#include "kspdiff/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "kspdiff/error.hpp"
#include "kspdiff/rng.hpp"

namespace kspdiff {
namespace {

double norm_coord(std::size_t i, std::size_t n) {
  return (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n) - 1.0;
}

}  // namespace

ComplexTensor render_ellipses(std::size_t rows, std::size_t cols, const std::vector<Ellipse>& ellipses) {
  ComplexTensor img({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    const double y = norm_coord(r, rows);
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = norm_coord(c, cols);
      double v = 0.0;
      for (const auto& e : ellipses) {
        const double dx = x - e.cx;
        const double dy = y - e.cy;
        const double ca = std::cos(e.angle), sa = std::sin(e.angle);
        const double u = (dx * ca + dy * sa) / e.semi_x;
        const double w = (-dx * sa + dy * ca) / e.semi_y;
        if (u * u + w * w <= 1.0) v += e.intensity;
      }
      img.at(r, c) = cplx(std::clamp(v, 0.0, 1.0), 0.0);
    }
  }
  return img;
}

std::vector<Ellipse> random_ellipses(std::size_t n_ellipses, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x5eed}));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  std::vector<Ellipse> out;
  out.reserve(n_ellipses);
  // Head outline stays centered so the brightest region always covers the middle.
  out.push_back({0.0, 0.0, uni(0.70, 0.90), uni(0.80, 0.95), uni(-0.3, 0.3), uni(0.55, 0.8)});
  for (std::size_t i = 1; i < n_ellipses; ++i) {
    Ellipse e;
    const double rad = uni(0.0, 0.5);
    const double phi = uni(0.0, 2.0 * std::numbers::pi);
    e.cx = rad * std::cos(phi);
    e.cy = rad * std::sin(phi);
    e.semi_x = uni(0.05, 0.35);
    e.semi_y = uni(0.05, 0.35);
    e.angle = uni(0.0, std::numbers::pi);
    e.intensity = uni(0.0, 1.0) < 0.7 ? uni(0.1, 0.4) : -uni(0.1, 0.3);
    out.push_back(e);
  }
  return out;
}

ComplexTensor generate_phantom(std::size_t rows, std::size_t cols, std::size_t n_ellipses,
                               std::uint64_t seed) {
  if (rows < 16 || cols < 16) throw InvalidArgument("phantom extents must be at least 16x16");
  if (n_ellipses < 1) throw InvalidArgument("phantom needs at least one ellipse");
  return render_ellipses(rows, cols, random_ellipses(n_ellipses, seed));
}

double SensitivityMaps::normalization_error() const {
  const std::size_t n = rows() * cols();
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sos = 0.0;
    for (std::size_t c = 0; c < coils(); ++c) sos += std::norm(maps[c * n + i]);
    worst = std::max(worst, std::abs(sos - 1.0));
  }
  return worst;
}

SensitivityMaps SensitivityMaps::unit(std::size_t rows, std::size_t cols) {
  ComplexTensor m({1, rows, cols});
  for (auto& v : m.data()) v = cplx(1.0, 0.0);
  return {std::move(m)};
}

SensitivityMaps generate_sensitivities(std::size_t n_coils, std::size_t rows, std::size_t cols,
                                       std::uint64_t seed) {
  if (n_coils < 1) throw InvalidArgument("need at least one coil");
  if (rows < 1 || cols < 1) throw InvalidArgument("degenerate sensitivity extents");
  if (n_coils == 1) return SensitivityMaps::unit(rows, cols);

  Rng rng(derive_seed(seed, {0xc011}));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double offset = 2.0 * std::numbers::pi * u01(rng);

  ComplexTensor maps({n_coils, rows, cols});
  for (std::size_t c = 0; c < n_coils; ++c) {
    const double theta = offset + 2.0 * std::numbers::pi * static_cast<double>(c) / n_coils;
    const double radius = 1.1 + 0.2 * u01(rng);
    const double width = 0.7 + 0.3 * u01(rng);
    const double phase0 = 2.0 * std::numbers::pi * u01(rng);
    const double gx = 1.5 * (u01(rng) - 0.5);
    const double gy = 1.5 * (u01(rng) - 0.5);
    const double px = radius * std::cos(theta);
    const double py = radius * std::sin(theta);
    for (std::size_t r = 0; r < rows; ++r) {
      const double y = norm_coord(r, rows);
      for (std::size_t q = 0; q < cols; ++q) {
        const double x = norm_coord(q, cols);
        const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
        const double mag = std::exp(-d2 / (2.0 * width * width));
        maps.at(c, r, q) = std::polar(mag, phase0 + gx * x + gy * y);
      }
    }
  }

  const std::size_t n = rows * cols;
  for (std::size_t i = 0; i < n; ++i) {
    double sos = 0.0;
    for (std::size_t c = 0; c < n_coils; ++c) sos += std::norm(maps[c * n + i]);
    const double inv = 1.0 / std::sqrt(sos);
    for (std::size_t c = 0; c < n_coils; ++c) maps[c * n + i] *= inv;
  }
  return {std::move(maps)};
}

}  // namespace kspdiff
