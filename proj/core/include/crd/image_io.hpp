#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "crd/tensor.hpp"

namespace crd {

/// Maps [-1, 1] to 0..255 with clamping and rounding.
std::uint8_t to_byte(double v);
double from_byte(std::uint8_t b);

/// Binary PPM (P6) of a [3,h,w] or [1,h,w] image; one channel is replicated.
std::string encode_ppm(const Tensor& image);
void write_ppm(const std::filesystem::path& path, const Tensor& image);
/// Reads a P6 file with maxval 255 into a [3,h,w] tensor in [-1, 1].
Tensor read_ppm(const std::filesystem::path& path);

/// Tiles rows of equally shaped images into one picture with a 1-pixel gap.
Tensor image_grid(const std::vector<std::vector<Tensor>>& rows);

}  // namespace crd
