#include <fstream>

#include "kspdiff/error.hpp"
#include "kspdiff/networks.hpp"
#include "kspdiff/tensor_io.hpp"

namespace kspdiff {
namespace {

ComplexTensor pack(std::span<const double> v, const Shape& shape) {
  std::vector<cplx> data(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) data[i] = cplx(v[i], 0.0);
  return ComplexTensor(shape, std::move(data));
}

void unpack(const ComplexTensor& t, std::span<double> out, const nn::ParamBlock& b) {
  if (t.shape() != b.shape)
    throw InvalidArgument("checkpoint block '" + b.name + "' has shape " + shape_to_string(t.shape()) +
                          ", expected " + shape_to_string(b.shape));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t[i].real();
}

}  // namespace

void save_checkpoint(const nn::ModelState& st, const nlohmann::json& spec, const std::filesystem::path& dir,
                     bool include_moments) {
  std::filesystem::create_directories(dir);
  nlohmann::json index = {{"version", 1}, {"step", st.step}, {"moments", include_moments}, {"spec", spec}};
  index["blocks"] = nlohmann::json::object();
  index["buffers"] = nlohmann::json::object();
  const auto prec = StoragePrecision::kC128;
  for (const auto& b : st.blocks) {
    index["blocks"][b.name] = b.shape;
    write_tensor(pack(std::span(st.params).subspan(b.offset, b.size), b.shape), dir / (b.name + ".cksp"), prec);
    if (include_moments) {
      write_tensor(pack(std::span(st.m1).subspan(b.offset, b.size), b.shape), dir / (b.name + ".m1.cksp"), prec);
      write_tensor(pack(std::span(st.m2).subspan(b.offset, b.size), b.shape), dir / (b.name + ".m2.cksp"), prec);
    }
  }
  for (const auto& b : st.buffer_blocks) {
    index["buffers"][b.name] = b.shape;
    write_tensor(pack(std::span(st.buffers).subspan(b.offset, b.size), b.shape), dir / (b.name + ".cksp"), prec);
  }
  std::ofstream os(dir / "index.json");
  if (!os) throw IoError("cannot write checkpoint index in " + dir.string());
  os << index.dump(2) << '\n';
}

nlohmann::json load_checkpoint(nn::ModelState& st, const std::filesystem::path& dir) {
  std::ifstream is(dir / "index.json");
  if (!is) throw IoError("missing checkpoint index in " + dir.string());
  const auto index = nlohmann::json::parse(is);
  const bool moments = index.value("moments", false);
  for (const auto& b : st.blocks) {
    if (!index.at("blocks").contains(b.name)) throw IoError("checkpoint lacks block '" + b.name + "'");
    unpack(read_tensor(dir / (b.name + ".cksp")), std::span(st.params).subspan(b.offset, b.size), b);
    if (moments) {
      unpack(read_tensor(dir / (b.name + ".m1.cksp")), std::span(st.m1).subspan(b.offset, b.size), b);
      unpack(read_tensor(dir / (b.name + ".m2.cksp")), std::span(st.m2).subspan(b.offset, b.size), b);
    } else {
      std::fill_n(st.m1.begin() + static_cast<std::ptrdiff_t>(b.offset), b.size, 0.0);
      std::fill_n(st.m2.begin() + static_cast<std::ptrdiff_t>(b.offset), b.size, 0.0);
    }
  }
  for (const auto& b : st.buffer_blocks) {
    if (!index.at("buffers").contains(b.name)) throw IoError("checkpoint lacks buffer '" + b.name + "'");
    unpack(read_tensor(dir / (b.name + ".cksp")), std::span(st.buffers).subspan(b.offset, b.size), b);
  }
  st.step = index.value("step", std::int64_t{0});
  st.zero_grads();
  return index.value("spec", nlohmann::json::object());
}

}  // namespace kspdiff
