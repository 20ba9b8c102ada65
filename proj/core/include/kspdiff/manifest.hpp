#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace kspdiff {

struct PhantomParams {
  std::size_t rows = 64;
  std::size_t cols = 64;
  std::size_t n_coils = 4;
  std::size_t n_ellipses = 10;
};

/// Index of a generated dataset directory. Paths are relative to the
/// directory holding manifest.json.
struct DatasetManifest {
  std::vector<std::string> slices;
  std::string sensitivities;
  std::uint64_t seed = 0;
  PhantomParams phantom;
  std::string created;  ///< ISO-8601 UTC

  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);

  /// Throws IoError naming the first referenced file that is missing.
  void verify_files(const std::filesystem::path& root) const;
};

inline constexpr const char* kManifestName = "manifest.json";

std::string utc_timestamp();

}  // namespace kspdiff
