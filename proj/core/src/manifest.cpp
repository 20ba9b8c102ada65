#include "kspdiff/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include "json.hpp"
#include "kspdiff/error.hpp"

namespace kspdiff {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  nlohmann::json j = {
      {"version", 1},
      {"seed", seed},
      {"created", created},
      {"phantom",
       {{"rows", phantom.rows},
        {"cols", phantom.cols},
        {"n_coils", phantom.n_coils},
        {"n_ellipses", phantom.n_ellipses}}},
      {"sensitivities", sensitivities},
      {"slices", slices},
  };
  std::ofstream os(path);
  if (!os) throw IoError("cannot write manifest: " + path.string());
  os << j.dump(2) << '\n';
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read manifest: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
    DatasetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.created = j.value("created", "");
    const auto& p = j.at("phantom");
    m.phantom.rows = p.at("rows");
    m.phantom.cols = p.at("cols");
    m.phantom.n_coils = p.at("n_coils");
    m.phantom.n_ellipses = p.at("n_ellipses");
    m.sensitivities = j.at("sensitivities");
    m.slices = j.at("slices").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
}

void DatasetManifest::verify_files(const std::filesystem::path& root) const {
  if (!std::filesystem::exists(root / sensitivities))
    throw IoError("missing sensitivity file: " + (root / sensitivities).string());
  for (const auto& s : slices)
    if (!std::filesystem::exists(root / s)) throw IoError("missing slice file: " + (root / s).string());
}

}  // namespace kspdiff
