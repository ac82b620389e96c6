#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crd/tensor.hpp"

namespace crd {

enum class Granularity { column, row, patch };

std::string_view to_string(Granularity g);
Granularity parse_granularity(std::string_view name);

struct PatchDims {
    std::size_t n = 0;  // patch height
    std::size_t m = 0;  // patch width
};

/// Slices of one image at one granularity. Items are the rows of a
/// [count, length] matrix, flattened channel-major then spatial raster.
struct ContentSet {
    Granularity granularity = Granularity::column;
    Tensor items;
    std::array<std::size_t, 3> source_shape{};  // (c, h, w)
    std::optional<PatchDims> patch_dims;

    std::size_t count() const { return items.dim(0); }
    std::size_t length() const { return items.dim(1); }
    /// Copy of item i as a plain vector.
    std::vector<double> item(std::size_t i) const;
};

/// Column strips, left to right. Each item has length c*h.
ContentSet split_columns(const Tensor& img);
/// Row strips, top to bottom. Each item has length c*w.
ContentSet split_rows(const Tensor& img);
/// Non-overlapping n x m patches in raster order. Each item has length c*n*m.
ContentSet split_patches(const Tensor& img, std::size_t n, std::size_t m);

ContentSet split(const Tensor& img, Granularity g, PatchDims patch = {});

/// Inverse of the split that produced the set.
Tensor reassemble(const ContentSet& set);

/// Closed-form item count and length for a granularity on a (c,h,w) image.
std::pair<std::size_t, std::size_t> content_layout(Granularity g, std::size_t c, std::size_t h, std::size_t w,
                                                   PatchDims patch = {});

}  // namespace crd
