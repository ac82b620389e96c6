#include "crd/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace crd {

std::uint8_t to_byte(double v) {
    const double c = std::clamp(v, -1.0, 1.0);
    return static_cast<std::uint8_t>(std::lround((c + 1.0) * 127.5));
}

double from_byte(std::uint8_t b) { return static_cast<double>(b) / 127.5 - 1.0; }

std::string encode_ppm(const Tensor& image) {
    if (image.rank() != 3 || (image.dim(0) != 3 && image.dim(0) != 1)) {
        throw std::invalid_argument("encode_ppm: expected [3,h,w] or [1,h,w], got " + shape_str(image.shape()));
    }
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    const auto& d = image.data();
    out.reserve(out.size() + 3 * h * w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const std::size_t src = c == 1 ? 0 : ch;
                out.push_back(static_cast<char>(to_byte(d[(src * h + y) * w + x])));
            }
        }
    }
    return out;
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
    const std::string bytes = encode_ppm(image);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Tensor read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P6" || maxval != 255 || w == 0 || h == 0) throw std::runtime_error(path.string() + ": not an 8-bit P6 image");
    in.get();
    std::vector<unsigned char> px(3 * w * h);
    in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (!in) throw std::runtime_error(path.string() + ": truncated pixel data");
    std::vector<double> v(3 * h * w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t ch = 0; ch < 3; ++ch) v[(ch * h + y) * w + x] = from_byte(px[(y * w + x) * 3 + ch]);
        }
    }
    return Tensor::from({3, h, w}, std::move(v));
}

Tensor image_grid(const std::vector<std::vector<Tensor>>& rows) {
    if (rows.empty() || rows.front().empty()) throw std::invalid_argument("image_grid: no images");
    const Shape cell = rows.front().front().shape();
    if (cell.size() != 3) throw std::invalid_argument("image_grid: images must be [c,h,w]");
    std::size_t cols = 0;
    for (const auto& r : rows) cols = std::max(cols, r.size());
    const std::size_t c = cell[0], h = cell[1], w = cell[2];
    const std::size_t gh = rows.size() * (h + 1) - 1, gw = cols * (w + 1) - 1;
    std::vector<double> g(c * gh * gw, -1.0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t k = 0; k < rows[r].size(); ++k) {
            const Tensor& img = rows[r][k];
            if (img.shape() != cell) {
                throw std::invalid_argument("image_grid: shape " + shape_str(img.shape()) + " differs from " + shape_str(cell));
            }
            const auto& d = img.data();
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t y = 0; y < h; ++y) {
                    for (std::size_t x = 0; x < w; ++x) {
                        g[(ch * gh + r * (h + 1) + y) * gw + k * (w + 1) + x] = d[(ch * h + y) * w + x];
                    }
                }
            }
        }
    }
    return Tensor::from({c, gh, gw}, std::move(g));
}

}  // namespace crd
