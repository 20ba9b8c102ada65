#include "kspdiff/data_consistency.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <vector>

#include "kspdiff/encoding.hpp"
#include "kspdiff/error.hpp"
#include "kspdiff/fft.hpp"

namespace kspdiff {

struct DcProjector::Rows {
  // Per image row: A maps the row to its constrained hybrid samples
  // (coil-major), pinv is its Moore-Penrose inverse.
  std::vector<Eigen::MatrixXcd> a;
  std::vector<Eigen::MatrixXcd> pinv;
  std::vector<std::size_t> cols;  // constrained column indices
};

namespace {

constexpr double kRankCut = 1e-7;  // relative to the largest pivot

Eigen::MatrixXcd pseudo_inverse(const Eigen::MatrixXcd& a) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod;
  cod.setThreshold(kRankCut);
  cod.compute(a);
  return cod.pseudoInverse();
}

void check_image(const ComplexTensor& x, const SensitivityMaps& sens, const char* what) {
  if (x.rank() != 2 || x.rows() != sens.rows() || x.cols() != sens.cols())
    throw InvalidArgument(std::string(what) + ": image " + shape_to_string(x.shape()) +
                          " does not match sensitivities " + shape_to_string(sens.maps.shape()));
}

}  // namespace

DcProjector::DcProjector(const SensitivityMaps& sens, const SamplingMask& mask, DcOptions opt)
    : sens_(sens), constrained_(mask), opt_(opt) {
  if (sens_.maps.rank() != 3) throw InvalidArgument("sensitivity maps must be [coils, rows, cols]");
  if (mask.width != sens_.cols())
    throw InvalidArgument("mask width " + std::to_string(mask.width) + " does not match image columns " +
                          std::to_string(sens_.cols()));
  if (opt_.inverted) {
    for (auto& f : constrained_.sampled) f = f ? 0 : 1;
    constrained_.center_lo = constrained_.center_hi = 0;
  }
  if (opt_.mode != DcMode::kExact) return;

  const std::size_t H = sens_.rows(), W = sens_.cols(), C = sens_.coils();
  rows_ = std::make_unique<Rows>();
  rows_->cols = constrained_.indices();
  const std::size_t M = rows_->cols.size();
  // centered orthonormal DFT rows for the constrained columns
  Eigen::MatrixXcd f(M, W);
  const double cc = static_cast<double>(W / 2), s = 1.0 / std::sqrt(static_cast<double>(W));
  for (std::size_t j = 0; j < M; ++j)
    for (std::size_t n = 0; n < W; ++n) {
      const double ph = -2.0 * std::numbers::pi * (static_cast<double>(rows_->cols[j]) - cc) *
                        (static_cast<double>(n) - cc) / static_cast<double>(W);
      f(j, n) = std::polar(s, ph);
    }
  rows_->a.resize(H);
  rows_->pinv.resize(H);
  for (std::size_t r = 0; r < H; ++r) {
    Eigen::MatrixXcd a(C * M, W);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t n = 0; n < W; ++n) {
        const cplx sv = sens_.maps.at(c, r, n);
        for (std::size_t j = 0; j < M; ++j) a(c * M + j, n) = f(j, n) * sv;
      }
    rows_->pinv[r] = M ? pseudo_inverse(a) : Eigen::MatrixXcd(W, 0);
    rows_->a[r] = std::move(a);
  }
}

DcProjector::~DcProjector() = default;
DcProjector::DcProjector(DcProjector&&) noexcept = default;
DcProjector& DcProjector::operator=(DcProjector&&) noexcept = default;

ComplexTensor DcProjector::project(const ComplexTensor& x, const ComplexTensor& measured_ks) const {
  check_image(x, sens_, "dc_project");
  if (measured_ks.shape() != sens_.maps.shape())
    throw InvalidArgument("dc_project: measured k-space " + shape_to_string(measured_ks.shape()) +
                          " does not match sensitivities " + shape_to_string(sens_.maps.shape()));
  if (opt_.mode == DcMode::kCoilReplace) {
    ComplexTensor k = fft2c_planes(expand_coils(x, sens_));
    for (std::size_t i = 0; i < k.size(); ++i)
      if (constrained_.sampled[i % constrained_.width]) k[i] = measured_ks[i];
    return combine_coils(ifft2c_planes(k), sens_);
  }
  const std::size_t H = sens_.rows(), W = sens_.cols(), C = sens_.coils();
  const std::size_t M = rows_->cols.size();
  if (M == 0) return x;
  const ComplexTensor hyb = ifft1c_rows(measured_ks);
  ComplexTensor out(x.shape());
  Eigen::VectorXcd b(C * M);
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t j = 0; j < M; ++j) b[c * M + j] = hyb.at(c, r, rows_->cols[j]);
    Eigen::Map<const Eigen::VectorXcd> xr(x.data().data() + r * W, W);
    Eigen::Map<Eigen::VectorXcd> zr(out.data().data() + r * W, W);
    zr = xr + rows_->pinv[r] * (b - rows_->a[r] * xr);
    zr += rows_->pinv[r] * (b - rows_->a[r] * zr);
  }
  return out;
}

ComplexTensor DcProjector::project_linear(const ComplexTensor& g) const {
  check_image(g, sens_, "dc_project_linear");
  if (opt_.mode == DcMode::kCoilReplace) {
    ComplexTensor k = fft2c_planes(expand_coils(g, sens_));
    for (std::size_t i = 0; i < k.size(); ++i)
      if (constrained_.sampled[i % constrained_.width]) k[i] = 0.0;
    return combine_coils(ifft2c_planes(k), sens_);
  }
  const std::size_t H = sens_.rows(), W = sens_.cols();
  if (rows_->cols.empty()) return g;
  ComplexTensor out(g.shape());
  for (std::size_t r = 0; r < H; ++r) {
    Eigen::Map<const Eigen::VectorXcd> gr(g.data().data() + r * W, W);
    Eigen::Map<Eigen::VectorXcd> zr(out.data().data() + r * W, W);
    zr = gr - rows_->pinv[r] * (rows_->a[r] * gr);
    zr -= rows_->pinv[r] * (rows_->a[r] * zr);
  }
  return out;
}

ComplexTensor dc_project(const ComplexTensor& pred_img, const ComplexTensor& measured_ks,
                         const SensitivityMaps& sens, const SamplingMask& mask, DcOptions opt) {
  return DcProjector(sens, mask, opt).project(pred_img, measured_ks);
}

}  // namespace kspdiff
