#include "kspdiff/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace kspdiff {
namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor I/O assumes a little-endian host");

constexpr std::array<char, 4> kMagic{'C', 'K', 'S', 'P'};

std::size_t component_bytes(StoragePrecision p) { return p == StoragePrecision::kC64 ? 4 : 8; }

const char* dtype_name(StoragePrecision p) { return p == StoragePrecision::kC64 ? "c64" : "c128"; }

}  // namespace

std::size_t payload_bytes(const Shape& shape, StoragePrecision precision) {
  return shape_numel(shape) * 2 * component_bytes(precision);
}

void write_tensor(const ComplexTensor& t, const std::filesystem::path& path,
                  StoragePrecision precision) {
  nlohmann::json header = {
      {"version", kTensorFormatVersion}, {"shape", t.shape()}, {"dtype", dtype_name(precision)}};
  const std::string text = header.dump();
  const auto header_len = static_cast<std::uint32_t>(text.size());

  std::vector<char> payload(payload_bytes(t.shape(), precision));
  char* out = payload.data();
  for (const auto& v : t.data()) {
    if (precision == StoragePrecision::kC64) {
      const float re = static_cast<float>(v.real());
      const float im = static_cast<float>(v.imag());
      std::memcpy(out, &re, 4);
      std::memcpy(out + 4, &im, 4);
      out += 8;
    } else {
      const double re = v.real();
      const double im = v.imag();
      std::memcpy(out, &re, 8);
      std::memcpy(out + 8, &im, 8);
      out += 16;
    }
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write(kMagic.data(), kMagic.size());
  os.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

ComplexTensor read_tensor(const std::filesystem::path& path) {
  using Kind = TensorFormatError::Kind;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::string where = " (" + path.string() + ")";

  if (bytes.size() < 4) throw TensorFormatError(Kind::kTruncated, "file shorter than magic" + where);
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
    throw TensorFormatError(Kind::kBadMagic, "bad magic, expected CKSP" + where);
  if (bytes.size() < 8) throw TensorFormatError(Kind::kTruncated, "missing header length" + where);

  std::uint32_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 4, 4);
  if (bytes.size() < 8 + std::size_t{header_len})
    throw TensorFormatError(Kind::kTruncated, "header truncated" + where);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw TensorFormatError(Kind::kBadHeader, std::string("unparseable header: ") + e.what() + where);
  }
  if (!header.contains("shape") || !header.contains("dtype") || !header["shape"].is_array())
    throw TensorFormatError(Kind::kBadHeader, "header lacks shape/dtype" + where);
  if (header.value("version", 0) != kTensorFormatVersion)
    throw TensorFormatError(Kind::kBadHeader, "unsupported version" + where);

  StoragePrecision precision;
  const auto dtype = header["dtype"].get<std::string>();
  if (dtype == "c64")
    precision = StoragePrecision::kC64;
  else if (dtype == "c128")
    precision = StoragePrecision::kC128;
  else
    throw TensorFormatError(Kind::kBadHeader, "unknown dtype " + dtype + where);

  Shape shape = header["shape"].get<Shape>();
  if (shape.empty())
    throw TensorFormatError(Kind::kBadHeader, "empty shape" + where);
  for (auto e : shape)
    if (e == 0) throw TensorFormatError(Kind::kBadHeader, "zero extent in shape" + where);

  const std::size_t payload_size = bytes.size() - 8 - header_len;
  const std::size_t elem = 2 * component_bytes(precision);
  if (payload_size % elem != 0)
    throw TensorFormatError(Kind::kTruncated, "payload ends mid-element" + where);
  const std::size_t count = payload_size / elem;
  if (count != shape_numel(shape))
    throw TensorFormatError(Kind::kPayloadMismatch,
                            "payload holds " + std::to_string(count) + " values but shape " +
                                shape_to_string(shape) + " needs " +
                                std::to_string(shape_numel(shape)) + where);

  std::vector<cplx> data(count);
  const char* in = bytes.data() + 8 + header_len;
  for (auto& v : data) {
    if (precision == StoragePrecision::kC64) {
      float re, im;
      std::memcpy(&re, in, 4);
      std::memcpy(&im, in + 4, 4);
      v = cplx(re, im);
      in += 8;
    } else {
      double re, im;
      std::memcpy(&re, in, 8);
      std::memcpy(&im, in + 8, 8);
      v = cplx(re, im);
      in += 16;
    }
  }
  return ComplexTensor(std::move(shape), std::move(data));
}

}  // namespace kspdiff
