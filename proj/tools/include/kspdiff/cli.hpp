#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "kspdiff/pipeline.hpp"

namespace kspdiff::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Default output root when --out is not given.
inline constexpr const char* kOutRootEnv = "KSPDIFF_OUT_ROOT";

/// Everything a run needs. Loaded from a JSON file, then overridden by flags;
/// the resolved form is written into every run directory.
struct RunConfig {
  std::string dataset;        ///< phantom dataset or undersampled directory
  double noise_std = 0.0;     ///< k-space noise added when undersampling on the fly
  std::size_t holdout = 40;   ///< trailing slices kept out of training and used for evaluation
  std::size_t n_boot = kDefaultBootstrap;
  std::int64_t checkpoint_every = 0;  ///< 0: once per epoch
  TrainConfig train;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults.
  static RunConfig from_json(const nlohmann::json& j);
};

/// Undersampled view of a dataset plus the fully sampled references.
struct Acquisition {
  SensitivityMaps sens;
  std::vector<SliceData> slices;
  std::vector<ComplexTensor> truths;
  std::vector<std::string> names;
};

/// Per-slice Omega for slice i of a dataset undersampled with `seed`.
SamplingMask slice_mask(std::size_t width, double R, double center_fraction, std::uint64_t seed, std::size_t i);

/// Reads a phantom dataset (undersampling it with the config's R, center
/// fraction and seed) or an undersampled directory written by `undersample`.
Acquisition load_acquisition(const std::filesystem::path& dir, const RunConfig& cfg);

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kspdiff::cli
