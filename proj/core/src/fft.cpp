#include "kspdiff/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "kspdiff/error.hpp"

namespace kspdiff {
namespace {

static_assert(sizeof(cplx) == sizeof(fftw_complex));

// FFTW planning is not thread-safe; executing a finished plan is.
class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  // kind 0: 2-D transform of one plane. kind 1: 1-D along rows (strided).
  fftw_plan get(int kind, int rows, int cols, int sign) {
    std::lock_guard lock(mu_);
    const auto key = std::make_tuple(kind, rows, cols, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::vector<cplx> scratch(static_cast<std::size_t>(rows) * cols);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan p;
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    if (kind == 0) {
      p = fftw_plan_dft_2d(rows, cols, buf, buf, sign, flags);
    } else {
      int n[] = {rows};
      p = fftw_plan_many_dft(1, n, cols, buf, nullptr, cols, 1, buf, nullptr, cols, 1, sign, flags);
    }
    if (!p) throw NumericalError("FFTW failed to create a plan");
    plans_.emplace(key, p);
    return p;
  }

 private:
  std::mutex mu_;
  std::map<std::tuple<int, int, int, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

void centered_2d(std::span<const cplx> in, std::span<cplx> out, std::size_t rows, std::size_t cols,
                 int sign) {
  const std::size_t cr = rows / 2, cc = cols / 2;
  std::vector<cplx> buf(rows * cols);
  // ifftshift on the way in
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t sr = (r + cr) % rows;
    for (std::size_t c = 0; c < cols; ++c) buf[r * cols + c] = in[sr * cols + (c + cc) % cols];
  }
  auto plan = plan_cache().get(0, static_cast<int>(rows), static_cast<int>(cols), sign);
  auto* p = reinterpret_cast<fftw_complex*>(buf.data());
  fftw_execute_dft(plan, p, p);
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows * cols));
  // fftshift on the way out
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t sr = (r + rows - cr) % rows;
    for (std::size_t c = 0; c < cols; ++c)
      out[r * cols + c] = buf[sr * cols + (c + cols - cc) % cols] * scale;
  }
}

ComplexTensor transform_planes(const ComplexTensor& x, int sign) {
  ComplexTensor out(x.shape());
  for (std::size_t p = 0; p < x.planes(); ++p)
    centered_2d(x.plane(p), out.plane(p), x.rows(), x.cols(), sign);
  return out;
}

void require_2d(const ComplexTensor& x, const char* what) {
  if (x.rank() != 2) throw InvalidArgument(std::string(what) + " expects a 2-D tensor, got " +
                                           shape_to_string(x.shape()));
}

}  // namespace

ComplexTensor fft2c(const ComplexTensor& img) {
  require_2d(img, "fft2c");
  return transform_planes(img, FFTW_FORWARD);
}

ComplexTensor ifft2c(const ComplexTensor& ks) {
  require_2d(ks, "ifft2c");
  return transform_planes(ks, FFTW_BACKWARD);
}

ComplexTensor fft2c_planes(const ComplexTensor& stack) {
  if (stack.rank() < 2) throw InvalidArgument("fft2c_planes expects rank >= 2");
  return transform_planes(stack, FFTW_FORWARD);
}

ComplexTensor ifft2c_planes(const ComplexTensor& stack) {
  if (stack.rank() < 2) throw InvalidArgument("ifft2c_planes expects rank >= 2");
  return transform_planes(stack, FFTW_BACKWARD);
}

ComplexTensor ifft1c_rows(const ComplexTensor& stack) {
  if (stack.rank() < 2) throw InvalidArgument("ifft1c_rows expects rank >= 2");
  const std::size_t rows = stack.rows(), cols = stack.cols(), cr = rows / 2;
  ComplexTensor out(stack.shape());
  std::vector<cplx> buf(rows * cols);
  auto plan = plan_cache().get(1, static_cast<int>(rows), static_cast<int>(cols), FFTW_BACKWARD);
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
  for (std::size_t p = 0; p < stack.planes(); ++p) {
    auto in = stack.plane(p);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) buf[r * cols + c] = in[((r + cr) % rows) * cols + c];
    auto* b = reinterpret_cast<fftw_complex*>(buf.data());
    fftw_execute_dft(plan, b, b);
    auto o = out.plane(p);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        o[r * cols + c] = buf[((r + rows - cr) % rows) * cols + c] * scale;
  }
  return out;
}

}  // namespace kspdiff
