#include "kspdiff/masks.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "kspdiff/error.hpp"
#include "kspdiff/rng.hpp"

namespace kspdiff {

std::size_t SamplingMask::count() const {
  return static_cast<std::size_t>(std::count(sampled.begin(), sampled.end(), std::uint8_t{1}));
}

std::vector<std::size_t> SamplingMask::indices() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < width; ++c)
    if (sampled[c]) out.push_back(c);
  return out;
}

SamplingMask SamplingMask::full(std::size_t width, std::size_t n_center) {
  SamplingMask m;
  m.width = width;
  m.sampled.assign(width, 1);
  m.center_lo = width / 2 - n_center / 2;
  m.center_hi = m.center_lo + n_center;
  return m;
}

std::size_t center_line_count(std::size_t width, double center_fraction) {
  return static_cast<std::size_t>(std::lround(center_fraction * static_cast<double>(width)));
}

SamplingMask make_random_mask(std::size_t width, double R, double center_fraction, std::uint64_t seed) {
  if (width < 8) throw InvalidArgument("mask width must be >= 8");
  if (!(R >= 1.0)) throw InvalidArgument("acceleration R must be >= 1");
  if (!(center_fraction > 0.0 && center_fraction < 1.0))
    throw InvalidArgument("center_fraction must lie in (0, 1)");

  const std::size_t n_center = center_line_count(width, center_fraction);
  const double w = static_cast<double>(width);
  const double nc = static_cast<double>(n_center);
  double p = n_center < width ? (w / R - nc) / (w - nc) : 1.0;
  if (p < 0.0)
    throw InvalidArgument("R too high for the center fraction: sampling probability " + std::to_string(p));
  p = std::clamp(p, 0.0, 1.0);

  SamplingMask m;
  m.width = width;
  m.sampled.assign(width, 0);
  m.center_lo = width / 2 - n_center / 2;
  m.center_hi = m.center_lo + n_center;

  Rng rng(derive_seed(seed, {0x3a5c}));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t c = 0; c < width; ++c) {
    const double u = u01(rng);  // drawn for every column so masks nest across R
    m.sampled[c] = m.is_center(c) || u < p;
  }
  return m;
}

MaskPartition partition_mask(const SamplingMask& omega, double rho, std::uint64_t seed, RhoMode mode) {
  if (!(rho > 0.0 && rho < 1.0)) throw InvalidArgument("rho must lie in (0, 1)");

  std::vector<std::size_t> outer;
  for (std::size_t c = 0; c < omega.width; ++c)
    if (omega[c] && !omega.is_center(c)) outer.push_back(c);
  if (outer.empty()) throw InvalidArgument("omega has no non-center samples to partition");

  const double fraction = mode == RhoMode::kFractionOfOmega ? rho : rho / (1.0 + rho);
  const std::size_t n = outer.size();
  auto n_aleph = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
  // keep both sides non-empty when there is room for it
  if (n >= 2) n_aleph = std::clamp<std::size_t>(n_aleph, 1, n - 1);

  Rng rng(derive_seed(seed, {0x9a27}));
  std::shuffle(outer.begin(), outer.end(), rng);

  MaskPartition part;
  part.omega = omega;
  part.rho = rho;
  part.seed = seed;
  part.aleph = omega;
  part.upsilon = omega;
  for (std::size_t c = 0; c < omega.width; ++c) {
    if (!omega.is_center(c)) {
      part.aleph.sampled[c] = 0;
      part.upsilon.sampled[c] = 0;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_aleph)
      part.aleph.sampled[outer[i]] = 1;
    else
      part.upsilon.sampled[outer[i]] = 1;
  }
  return part;
}

ComplexTensor apply_mask(const ComplexTensor& ks, const SamplingMask& mask) {
  if (ks.rank() < 1 || ks.cols() != mask.width)
    throw InvalidArgument("apply_mask: trailing extent " + shape_to_string(ks.shape()) +
                          " does not match mask width " + std::to_string(mask.width));
  ComplexTensor out = ks;
  const std::size_t w = mask.width;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!mask.sampled[i % w]) out[i] = cplx{};
  return out;
}

nlohmann::json to_json(const SamplingMask& m) {
  return {{"width", m.width}, {"center", {m.center_lo, m.center_hi}}, {"sampled", m.indices()}};
}

SamplingMask mask_from_json(const nlohmann::json& j) {
  SamplingMask m;
  m.width = j.at("width").get<std::size_t>();
  const auto center = j.at("center").get<std::vector<std::size_t>>();
  if (center.size() != 2 || center[0] > center[1] || center[1] > m.width)
    throw InvalidArgument("mask JSON has a malformed center range");
  m.center_lo = center[0];
  m.center_hi = center[1];
  m.sampled.assign(m.width, 0);
  for (auto idx : j.at("sampled").get<std::vector<std::size_t>>()) {
    if (idx >= m.width) throw InvalidArgument("mask JSON index out of range");
    m.sampled[idx] = 1;
  }
  return m;
}

nlohmann::json to_json(const MaskPartition& p) {
  nlohmann::json j = to_json(p.omega);
  j["aleph"] = p.aleph.indices();
  j["upsilon"] = p.upsilon.indices();
  j["rho"] = p.rho;
  j["seed"] = p.seed;
  return j;
}

MaskPartition partition_from_json(const nlohmann::json& j) {
  MaskPartition p;
  p.omega = mask_from_json(j);
  auto sub = [&](const char* key) {
    SamplingMask m = p.omega;
    m.sampled.assign(m.width, 0);
    for (auto idx : j.at(key).get<std::vector<std::size_t>>()) {
      if (idx >= m.width) throw InvalidArgument("partition JSON index out of range");
      m.sampled[idx] = 1;
    }
    return m;
  };
  p.aleph = sub("aleph");
  p.upsilon = sub("upsilon");
  p.rho = j.at("rho").get<double>();
  p.seed = j.value("seed", std::uint64_t{0});
  return p;
}

}  // namespace kspdiff
