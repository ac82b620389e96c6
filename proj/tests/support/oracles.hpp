#pragma once

// Naive loop implementations used as independent references in tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "crd/tensor.hpp"

namespace crd::oracle {

using Items = std::vector<std::vector<double>>;

inline Items random_items(std::size_t n, std::size_t len, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Items items(n, std::vector<double>(len));
    for (auto& it : items)
        for (auto& v : it) v = g(rng);
    return items;
}

inline Tensor to_tensor(const Items& items) {
    std::vector<double> flat;
    for (const auto& it : items) flat.insert(flat.end(), it.begin(), it.end());
    return Tensor::from({items.size(), items.front().size()}, flat);
}

inline Tensor random_image(Shape shape, std::uint64_t seed, bool requires_grad = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline double huber(double a, double b) {
    const double d = std::abs(a - b);
    return d <= 1.0 ? 0.5 * d * d : d - 0.5;
}

inline double dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

inline double mean_dist(const Items& x) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = i + 1; j < x.size(); ++j, ++n) s += dist(x[i], x[j]);
    return s / static_cast<double>(n);
}

inline double distance_loss(const Items& t, const Items& s, double eps = 1e-12) {
    const double mt = std::max(mean_dist(t), eps), ms = std::max(mean_dist(s), eps);
    double loss = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = i + 1; j < t.size(); ++j) loss += huber(dist(t[i], t[j]) / mt, dist(s[i], s[j]) / ms);
    return loss;
}

// Cosine between residues vi - vj and vj - vk.
inline double cosine(const std::vector<double>& vi, const std::vector<double>& vj, const std::vector<double>& vk,
                     double eps = 1e-12) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t c = 0; c < vi.size(); ++c) {
        const double a = vi[c] - vj[c], b = vj[c] - vk[c];
        dot += a * b;
        na += a * a;
        nb += b * b;
    }
    return dot / (std::max(std::sqrt(na), eps) * std::max(std::sqrt(nb), eps));
}

inline double angle_loss(const Items& t, const Items& s) {
    double loss = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = i + 1; j < t.size(); ++j)
            for (std::size_t k = j + 1; k < t.size(); ++k) loss += huber(cosine(t[i], t[j], t[k]), cosine(s[i], s[j], s[k]));
    return loss;
}

inline double pixel(const Tensor& img, std::size_t ch, std::size_t y, std::size_t x) {
    return img.data()[(ch * img.dim(1) + y) * img.dim(2) + x];
}

// Content slicing straight from [c,h,w] data, channel-major within each item.
inline Items columns_of(const Tensor& img) {
    Items out(img.dim(2));
    for (std::size_t x = 0; x < img.dim(2); ++x)
        for (std::size_t ch = 0; ch < img.dim(0); ++ch)
            for (std::size_t y = 0; y < img.dim(1); ++y) out[x].push_back(pixel(img, ch, y, x));
    return out;
}

inline Items rows_of(const Tensor& img) {
    Items out(img.dim(1));
    for (std::size_t y = 0; y < img.dim(1); ++y)
        for (std::size_t ch = 0; ch < img.dim(0); ++ch)
            for (std::size_t x = 0; x < img.dim(2); ++x) out[y].push_back(pixel(img, ch, y, x));
    return out;
}

inline Items patches_of(const Tensor& img, std::size_t n, std::size_t m) {
    Items out;
    for (std::size_t py = 0; py < img.dim(1) / n; ++py)
        for (std::size_t px = 0; px < img.dim(2) / m; ++px) {
            std::vector<double> item;
            for (std::size_t ch = 0; ch < img.dim(0); ++ch)
                for (std::size_t y = 0; y < n; ++y)
                    for (std::size_t x = 0; x < m; ++x) item.push_back(pixel(img, ch, py * n + y, px * m + x));
            out.push_back(item);
        }
    return out;
}

struct ContentLosses {
    double distance = 0.0;
    double angle = 0.0;
};

// Sum over columns, rows and n x m patches of a single [c,h,w] pair.
inline ContentLosses content_losses(const Tensor& t, const Tensor& s, std::size_t n, std::size_t m) {
    ContentLosses out;
    const Items ts[3] = {columns_of(t), rows_of(t), patches_of(t, n, m)};
    const Items ss[3] = {columns_of(s), rows_of(s), patches_of(s, n, m)};
    for (int g = 0; g < 3; ++g) {
        out.distance += distance_loss(ts[g], ss[g]);
        out.angle += angle_loss(ts[g], ss[g]);
    }
    return out;
}

// F F^T / (C H W) for a [C,H,W] activation.
inline std::vector<double> gram(const Tensor& a) {
    const std::size_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
    std::vector<double> g(c * c, 0.0);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            double s = 0.0;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) s += pixel(a, i, y, x) * pixel(a, j, y, x);
            g[i * c + j] = s / static_cast<double>(c * h * w);
        }
    return g;
}

inline bool close_rel(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace crd::oracle
