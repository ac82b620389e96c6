#include "crd/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace crd {

std::string_view to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::invert: return "invert";
        case TaskKind::blur2sharp: return "blur2sharp";
        case TaskKind::shapes: return "shapes";
    }
    return "?";
}

TaskKind parse_task(std::string_view name) {
    if (name == "invert") return TaskKind::invert;
    if (name == "blur2sharp") return TaskKind::blur2sharp;
    if (name == "shapes") return TaskKind::shapes;
    throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {

constexpr std::size_t kChannels = 3;

struct Canvas {
    std::size_t size;
    std::vector<double> px;  // [3, s, s]

    explicit Canvas(std::size_t s) : size(s), px(kChannels * s * s, 0.0) {}
    double& at(std::size_t c, std::size_t y, std::size_t x) { return px[(c * size + y) * size + x]; }

    Tensor to_tensor() {
        for (auto& v : px) v = std::clamp(v, -1.0, 1.0);
        return Tensor::from({kChannels, size, size}, px);
    }
};

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

std::array<double, 3> random_color(Rng& rng, double lo = -1.0, double hi = 1.0) {
    return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

// Smooth scene: tinted linear gradient plus a few soft Gaussian blobs.
Tensor smooth_scene(Rng& rng, std::size_t s) {
    Canvas canvas(s);
    const auto base = random_color(rng, -0.5, 0.5);
    const double gx = uniform(rng, -0.6, 0.6), gy = uniform(rng, -0.6, 0.6);
    for (std::size_t c = 0; c < kChannels; ++c)
        for (std::size_t y = 0; y < s; ++y)
            for (std::size_t x = 0; x < s; ++x) {
                const double u = static_cast<double>(x) / static_cast<double>(s) - 0.5;
                const double v = static_cast<double>(y) / static_cast<double>(s) - 0.5;
                canvas.at(c, y, x) = base[c] + gx * u + gy * v;
            }
    const int blobs = std::uniform_int_distribution<int>(2, 4)(rng);
    for (int b = 0; b < blobs; ++b) {
        const auto color = random_color(rng);
        const double cx = uniform(rng, 0.0, static_cast<double>(s));
        const double cy = uniform(rng, 0.0, static_cast<double>(s));
        const double sigma = uniform(rng, 0.08, 0.25) * static_cast<double>(s);
        for (std::size_t y = 0; y < s; ++y)
            for (std::size_t x = 0; x < s; ++x) {
                const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
                const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                for (std::size_t c = 0; c < kChannels; ++c) canvas.at(c, y, x) = (1.0 - w) * canvas.at(c, y, x) + w * color[c];
            }
    }
    return canvas.to_tensor();
}

enum class Shape2D { circle, square };

// Hard-edged shapes over a flat background.
Tensor shape_scene(Rng& rng, std::size_t s, Shape2D kind, double bg_lo, double bg_hi, int min_count, int max_count) {
    Canvas canvas(s);
    const auto bg = random_color(rng, bg_lo, bg_hi);
    for (std::size_t c = 0; c < kChannels; ++c)
        for (std::size_t i = 0; i < s * s; ++i) canvas.px[c * s * s + i] = bg[c];
    const int count = std::uniform_int_distribution<int>(min_count, max_count)(rng);
    const double sd = static_cast<double>(s);
    for (int k = 0; k < count; ++k) {
        const auto color = random_color(rng);
        const double cx = uniform(rng, 0.2 * sd, 0.8 * sd);
        const double cy = uniform(rng, 0.2 * sd, 0.8 * sd);
        const double r = uniform(rng, 0.1, 0.25) * sd;
        for (std::size_t y = 0; y < s; ++y)
            for (std::size_t x = 0; x < s; ++x) {
                const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
                const bool inside = kind == Shape2D::circle ? (dx * dx + dy * dy <= r * r)
                                                            : (std::fabs(dx) <= r && std::fabs(dy) <= r);
                if (inside) {
                    for (std::size_t c = 0; c < kChannels; ++c) canvas.at(c, y, x) = color[c];
                }
            }
    }
    return canvas.to_tensor();
}

Tensor box_blur(const Tensor& img) {
    const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    auto in = img.data();
    std::vector<double> out(in.size());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double s = 0.0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const auto yy = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(y) + dy, 0, static_cast<long>(h) - 1));
                        const auto xx = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(x) + dx, 0, static_cast<long>(w) - 1));
                        s += in[(ch * h + yy) * w + xx];
                    }
                out[(ch * h + y) * w + x] = s / 9.0;
            }
    return Tensor::from(img.shape(), std::move(out));
}

Tensor negate(const Tensor& img) {
    std::vector<double> out(img.data().begin(), img.data().end());
    for (auto& v : out) v = -v;
    return Tensor::from(img.shape(), std::move(out));
}

}  // namespace

Dataset generate_dataset(const SyntheticTask& task) {
    if (task.train_count < 1 || task.val_count < 1) throw std::invalid_argument("dataset counts must be at least 1");
    if (task.image_size < 4) throw std::invalid_argument("image_size must be at least 4");
    Dataset ds;
    ds.paired = task.kind != TaskKind::shapes;
    const std::size_t s = task.image_size;
    std::uint64_t stream = 0;
    auto make_pair = [&](std::vector<Tensor>& inputs, std::vector<Tensor>& targets) {
        Rng rng(derive_seed(task.seed, stream++));
        switch (task.kind) {
            case TaskKind::invert: {
                Tensor in = smooth_scene(rng, s);
                targets.push_back(negate(in));
                inputs.push_back(in);
                break;
            }
            case TaskKind::blur2sharp: {
                Tensor sharp = shape_scene(rng, s, Shape2D::square, -0.8, 0.2, 1, 3);
                inputs.push_back(box_blur(sharp));
                targets.push_back(sharp);
                break;
            }
            case TaskKind::shapes: {
                inputs.push_back(shape_scene(rng, s, Shape2D::circle, -0.9, -0.4, 1, 3));
                Rng other(derive_seed(task.seed ^ 0x5EEDULL, stream));
                targets.push_back(shape_scene(other, s, Shape2D::square, 0.2, 0.7, 1, 3));
                break;
            }
        }
    };
    for (std::size_t i = 0; i < task.train_count; ++i) make_pair(ds.train_inputs, ds.train_targets);
    for (std::size_t i = 0; i < task.val_count; ++i) make_pair(ds.val_inputs, ds.val_targets);
    return ds;
}

Tensor stack_images(const std::vector<Tensor>& images) {
    std::vector<std::size_t> all(images.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return stack_images(images, all);
}

Tensor stack_images(const std::vector<Tensor>& images, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw std::invalid_argument("stack_images: no images");
    const Shape& shape = images.at(indices.front()).shape();
    if (shape.size() != 3) throw std::invalid_argument("stack_images: expected [c,h,w] images");
    std::vector<double> values;
    values.reserve(indices.size() * shape_numel(shape));
    for (auto i : indices) {
        const Tensor& img = images.at(i);
        if (img.shape() != shape) throw std::invalid_argument("stack_images: images differ in shape");
        values.insert(values.end(), img.data().begin(), img.data().end());
    }
    return Tensor::from({indices.size(), shape[0], shape[1], shape[2]}, std::move(values));
}

}  // namespace crd
