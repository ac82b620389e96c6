#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "crd/tensor.hpp"

namespace crd {

// Portable tensor file:
//   "CRDT" | version u8 (=1) | rank u32 | dims u32[rank] | data f32[numel]
// All integers and floats little-endian, data row-major.
inline constexpr std::uint8_t kTensorFileVersion = 1;

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

/// Serialized bytes of a tensor, handy for bit-exactness checks.
std::vector<std::uint8_t> encode_tensor(const Tensor& t);

}  // namespace crd
