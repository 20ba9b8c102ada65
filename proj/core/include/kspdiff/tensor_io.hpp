#pragma once

#include <filesystem>
#include <string>

#include "kspdiff/error.hpp"
#include "kspdiff/tensor.hpp"

namespace kspdiff {

// On-disk layout:
//   bytes 0..3   "CKSP"
//   u32 LE       header length N
//   N bytes      UTF-8 JSON {"version":1,"shape":[...],"dtype":"c64"}
//   payload      interleaved little-endian (re, im) pairs, row-major
//
// dtype "c64" stores 32-bit float components (the default). "c128" stores
// 64-bit components and is used for checkpoints that must resume bit-exactly.

enum class StoragePrecision { kC64, kC128 };

inline constexpr int kTensorFormatVersion = 1;

class TensorFormatError : public Error {
 public:
  enum class Kind { kBadMagic, kBadHeader, kTruncated, kPayloadMismatch };
  TensorFormatError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

void write_tensor(const ComplexTensor& t, const std::filesystem::path& path,
                  StoragePrecision precision = StoragePrecision::kC64);

ComplexTensor read_tensor(const std::filesystem::path& path);

/// Size in bytes of the payload section for a given tensor.
std::size_t payload_bytes(const Shape& shape, StoragePrecision precision = StoragePrecision::kC64);

}  // namespace kspdiff
