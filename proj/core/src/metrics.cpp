#include "kspdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "kspdiff/error.hpp"

namespace kspdiff {
namespace {

void check_pair(std::span<const double> y, std::span<const double> y_hat, const char* what) {
  if (y.size() != y_hat.size())
    throw InvalidArgument(std::string(what) + ": size mismatch " + std::to_string(y.size()) + " vs " +
                          std::to_string(y_hat.size()));
  if (y.empty()) throw InvalidArgument(std::string(what) + ": empty input");
}

std::vector<double> mags(const ComplexTensor& t) {
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = std::abs(t[i]);
  return out;
}

double max_abs(std::span<const double> y) {
  double m = 0.0;
  for (double v : y) m = std::max(m, std::abs(v));
  return m;
}

std::vector<double> gaussian_window(std::size_t n, double sigma) {
  std::vector<double> w(n * n);
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
      sum += w[i * n + j] = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
    }
  for (double& v : w) v /= sum;
  return w;
}

}  // namespace

double mse(std::span<const double> y, std::span<const double> y_hat) {
  check_pair(y, y_hat, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
  return acc / static_cast<double>(y.size());
}

double nmse(std::span<const double> y, std::span<const double> y_hat) {
  check_pair(y, y_hat, "nmse");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    num += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    den += y[i] * y[i];
  }
  if (den == 0.0) throw InvalidArgument("nmse: reference has zero norm");
  return num / den;
}

double nmse(const ComplexTensor& y, const ComplexTensor& y_hat) {
  require_same_shape(y, y_hat, "nmse");
  return nmse(mags(y), mags(y_hat));
}

double psnr(std::span<const double> y, std::span<const double> y_hat) {
  const double e = mse(y, y_hat);
  const double ymax = max_abs(y);
  if (ymax <= 0.0) throw InvalidArgument("psnr: reference maximum is zero");
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(ymax * ymax / e);
}

double psnr(const ComplexTensor& y, const ComplexTensor& y_hat) {
  require_same_shape(y, y_hat, "psnr");
  return psnr(mags(y), mags(y_hat));
}

bool is_perfect_psnr(double db) { return std::isinf(db) && db > 0.0; }

double ssim(std::span<const double> y, std::span<const double> y_hat, std::size_t rows, std::size_t cols,
            const SsimOptions& opt) {
  check_pair(y, y_hat, "ssim");
  if (rows * cols != y.size()) throw InvalidArgument("ssim: rows*cols does not match input size");
  const std::size_t n = opt.window;
  if (n == 0 || rows < n || cols < n)
    throw InvalidArgument("ssim: image " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " smaller than the " + std::to_string(n) + "x" + std::to_string(n) + " window");
  const double range = opt.data_range > 0.0 ? opt.data_range : max_abs(y);
  if (range <= 0.0) throw InvalidArgument("ssim: reference is identically zero");
  const double c1 = opt.unsquared_constants ? opt.k1 * range : (opt.k1 * range) * (opt.k1 * range);
  const double c2 = opt.unsquared_constants ? opt.k2 * range : (opt.k2 * range) * (opt.k2 * range);
  const auto w = gaussian_window(n, opt.sigma);

  double total = 0.0;
  for (std::size_t r0 = 0; r0 + n <= rows; ++r0)
    for (std::size_t q0 = 0; q0 + n <= cols; ++q0) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double wi = w[i * n + j];
          const double a = y[(r0 + i) * cols + q0 + j], b = y_hat[(r0 + i) * cols + q0 + j];
          mx += wi * a;
          my += wi * b;
          sxx += wi * a * a;
          syy += wi * b * b;
          sxy += wi * a * b;
        }
      const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  return total / static_cast<double>((rows - n + 1) * (cols - n + 1));
}

double ssim(const ComplexTensor& y, const ComplexTensor& y_hat, const SsimOptions& opt) {
  require_same_shape(y, y_hat, "ssim");
  if (y.rank() != 2) throw InvalidArgument("ssim expects 2-D images");
  return ssim(mags(y), mags(y_hat), y.rows(), y.cols(), opt);
}

}  // namespace kspdiff
