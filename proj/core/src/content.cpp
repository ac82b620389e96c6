#include "crd/content.hpp"

#include <stdexcept>
#include <string>

#include "crd/ops.hpp"

namespace crd {

std::string_view to_string(Granularity g) {
    switch (g) {
        case Granularity::column: return "column";
        case Granularity::row: return "row";
        case Granularity::patch: return "patch";
    }
    return "?";
}

Granularity parse_granularity(std::string_view name) {
    if (name == "column") return Granularity::column;
    if (name == "row") return Granularity::row;
    if (name == "patch") return Granularity::patch;
    throw std::invalid_argument("unknown granularity '" + std::string(name) + "'");
}

std::vector<double> ContentSet::item(std::size_t i) const {
    const std::size_t len = length();
    auto d = items.data();
    return {d.begin() + static_cast<std::ptrdiff_t>(i * len), d.begin() + static_cast<std::ptrdiff_t>((i + 1) * len)};
}

namespace {

std::array<std::size_t, 3> image_dims(const Tensor& img, const char* op) {
    if (img.rank() != 3) throw std::invalid_argument(std::string(op) + ": expected [c,h,w] image, got " + shape_str(img.shape()));
    return {img.dim(0), img.dim(1), img.dim(2)};
}

// Flat source index of every item element, item-major.
std::vector<std::size_t> layout_indices(Granularity g, std::size_t c, std::size_t h, std::size_t w, PatchDims patch) {
    std::vector<std::size_t> idx;
    idx.reserve(c * h * w);
    switch (g) {
        case Granularity::column:
            for (std::size_t x = 0; x < w; ++x)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t y = 0; y < h; ++y) idx.push_back((ch * h + y) * w + x);
            break;
        case Granularity::row:
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t x = 0; x < w; ++x) idx.push_back((ch * h + y) * w + x);
            break;
        case Granularity::patch:
            for (std::size_t py = 0; py < h / patch.n; ++py)
                for (std::size_t px = 0; px < w / patch.m; ++px)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        for (std::size_t y = 0; y < patch.n; ++y)
                            for (std::size_t x = 0; x < patch.m; ++x)
                                idx.push_back((ch * h + py * patch.n + y) * w + px * patch.m + x);
            break;
    }
    return idx;
}

void validate(Granularity g, std::size_t c, std::size_t h, std::size_t w, PatchDims patch) {
    (void)c;
    switch (g) {
        case Granularity::column:
            if (w < 2) throw std::invalid_argument("split_columns: width " + std::to_string(w) + " < 2, no pairs possible");
            break;
        case Granularity::row:
            if (h < 2) throw std::invalid_argument("split_rows: height " + std::to_string(h) + " < 2, no pairs possible");
            break;
        case Granularity::patch:
            if (patch.n == 0 || patch.m == 0) throw std::invalid_argument("split_patches: patch dims must be positive");
            if (h % patch.n != 0) {
                throw std::invalid_argument("split_patches: height " + std::to_string(h) + " not divisible by patch height " +
                                            std::to_string(patch.n));
            }
            if (w % patch.m != 0) {
                throw std::invalid_argument("split_patches: width " + std::to_string(w) + " not divisible by patch width " +
                                            std::to_string(patch.m));
            }
            if ((h / patch.n) * (w / patch.m) < 2) throw std::invalid_argument("split_patches: fewer than 2 patches");
            break;
    }
}

}  // namespace

std::pair<std::size_t, std::size_t> content_layout(Granularity g, std::size_t c, std::size_t h, std::size_t w,
                                                   PatchDims patch) {
    validate(g, c, h, w, patch);
    switch (g) {
        case Granularity::column: return {w, c * h};
        case Granularity::row: return {h, c * w};
        case Granularity::patch: return {(h * w) / (patch.n * patch.m), c * patch.n * patch.m};
    }
    throw std::logic_error("unknown granularity");
}

ContentSet split(const Tensor& img, Granularity g, PatchDims patch) {
    const auto [c, h, w] = image_dims(img, "split");
    const auto [count, length] = content_layout(g, c, h, w, patch);
    ContentSet set;
    set.granularity = g;
    set.source_shape = {c, h, w};
    if (g == Granularity::patch) set.patch_dims = patch;
    set.items = gather(img, layout_indices(g, c, h, w, patch), {count, length});
    return set;
}

ContentSet split_columns(const Tensor& img) { return split(img, Granularity::column); }
ContentSet split_rows(const Tensor& img) { return split(img, Granularity::row); }
ContentSet split_patches(const Tensor& img, std::size_t n, std::size_t m) {
    return split(img, Granularity::patch, PatchDims{n, m});
}

Tensor reassemble(const ContentSet& set) {
    const auto [c, h, w] = set.source_shape;
    const PatchDims patch = set.patch_dims.value_or(PatchDims{});
    if (set.granularity == Granularity::patch && !set.patch_dims) {
        throw std::invalid_argument("reassemble: patch set without patch dims");
    }
    const auto [count, length] = content_layout(set.granularity, c, h, w, patch);
    if (set.items.rank() != 2 || set.items.dim(0) != count || set.items.dim(1) != length) {
        throw std::invalid_argument("reassemble: items " + shape_str(set.items.shape()) + " inconsistent with " +
                                    std::string(to_string(set.granularity)) + " layout of " + shape_str({c, h, w}));
    }
    const auto forward = layout_indices(set.granularity, c, h, w, patch);
    std::vector<std::size_t> inverse(forward.size());
    for (std::size_t i = 0; i < forward.size(); ++i) inverse[forward[i]] = i;
    return gather(set.items, inverse, {c, h, w});
}

}  // namespace crd
