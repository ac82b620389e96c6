#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "crd/ops.hpp"

namespace crd {

namespace {

using detail::Node;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

struct ConvGeometry {
    std::size_t batch, in_ch, height, width;
    std::size_t out_ch, kh, kw;
    std::size_t stride, padding;
    std::size_t out_h, out_w;

    std::size_t col_rows() const { return in_ch * kh * kw; }
    std::size_t col_cols() const { return out_h * out_w; }
};

// Per-thread reusable buffers; large short-lived allocations otherwise
// dominate through page faults.
double* scratch(std::size_t slot, std::size_t n) {
    thread_local std::array<detail::Buffer, 3> buffers;
    auto& b = buffers[slot];
    if (b.size() < n) b.resize(n);
    return b.data();
}

// Output columns [lo, hi) whose input column ox * stride + kx - padding lies inside the image.
std::pair<std::size_t, std::size_t> valid_range(std::size_t k, const ConvGeometry& g, std::size_t extent, std::size_t out) {
    const long pad = static_cast<long>(g.padding) - static_cast<long>(k);
    const long s = static_cast<long>(g.stride);
    long lo = pad > 0 ? (pad + s - 1) / s : 0;
    long hi = (static_cast<long>(extent) + pad + s - 1) / s;
    lo = std::min<long>(lo, static_cast<long>(out));
    hi = std::clamp<long>(hi, lo, static_cast<long>(out));
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

void im2col(const double* image, const ConvGeometry& g, double* col) {
    const std::size_t cols = g.col_cols();
    for (std::size_t c = 0; c < g.in_ch; ++c) {
        const double* plane = image + c * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const auto [y0, y1] = valid_range(ky, g, g.height, g.out_h);
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const auto [x0, x1] = valid_range(kx, g, g.width, g.out_w);
                double* row = col + ((c * g.kh + ky) * g.kw + kx) * cols;
                std::fill(row, row + y0 * g.out_w, 0.0);
                for (std::size_t oy = y0; oy < y1; ++oy) {
                    double* dst = row + oy * g.out_w;
                    const double* src = plane + (oy * g.stride + ky - g.padding) * g.width;
                    const std::size_t sx0 = x0 * g.stride + kx - g.padding;
                    std::fill(dst, dst + x0, 0.0);
                    if (g.stride == 1) {
                        std::copy(src + sx0, src + sx0 + (x1 - x0), dst + x0);
                    } else {
                        for (std::size_t ox = x0; ox < x1; ++ox) dst[ox] = src[sx0 + (ox - x0) * g.stride];
                    }
                    std::fill(dst + x1, dst + g.out_w, 0.0);
                }
                std::fill(row + y1 * g.out_w, row + cols, 0.0);
            }
        }
    }
}

void col2im_add(const double* col, const ConvGeometry& g, double* image) {
    const std::size_t cols = g.col_cols();
    for (std::size_t c = 0; c < g.in_ch; ++c) {
        double* plane = image + c * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const auto [y0, y1] = valid_range(ky, g, g.height, g.out_h);
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const auto [x0, x1] = valid_range(kx, g, g.width, g.out_w);
                const double* row = col + ((c * g.kh + ky) * g.kw + kx) * cols;
                for (std::size_t oy = y0; oy < y1; ++oy) {
                    const double* src = row + oy * g.out_w;
                    double* dst = plane + (oy * g.stride + ky - g.padding) * g.width;
                    const std::size_t sx0 = x0 * g.stride + kx - g.padding;
                    for (std::size_t ox = x0; ox < x1; ++ox) dst[sx0 + (ox - x0) * g.stride] += src[ox];
                }
            }
        }
    }
}

// Direct stride-1 convolution for layers with very few output channels,
// where the im2col buffer would dwarf the arithmetic. Works on a zero-padded
// copy of each plane: output row oy of tap (ky, kx) then reads a contiguous
// span, so every (out, in, tap) triple is a single long axpy or dot product
// over a "wide" output whose rows are padded_w long.
struct WideLayout {
    std::size_t pw, ph, span;

    explicit WideLayout(const ConvGeometry& g)
        : pw(g.width + 2 * g.padding), ph(g.height + 2 * g.padding), span((g.out_h - 1) * pw + g.out_w) {}
    std::size_t plane() const { return ph * pw; }
};

void pad_planes(const double* src, const ConvGeometry& g, const WideLayout& wl, double* dst) {
    std::fill(dst, dst + g.in_ch * wl.plane(), 0.0);
    for (std::size_t c = 0; c < g.in_ch; ++c) {
        for (std::size_t y = 0; y < g.height; ++y) {
            const double* row = src + (c * g.height + y) * g.width;
            std::copy(row, row + g.width, dst + c * wl.plane() + (y + g.padding) * wl.pw + g.padding);
        }
    }
}

Tensor conv2d_direct(const Tensor& input, const Tensor& kernel, const std::optional<Tensor>& bias, const ConvGeometry& g) {
    const WideLayout wl(g);
    const std::size_t in_size = g.in_ch * g.height * g.width;
    const std::size_t out_plane = g.out_h * g.out_w;
    const std::size_t out_size = g.out_ch * out_plane;
    const auto span = static_cast<Eigen::Index>(wl.span);
    std::vector<double> out(g.batch * out_size);
    auto in = input.data();
    auto w = kernel.data();
    double* padded = scratch(0, g.in_ch * wl.plane());
    double* wide = scratch(1, wl.span);
    for (std::size_t b = 0; b < g.batch; ++b) {
        pad_planes(in.data() + b * in_size, g, wl, padded);
        for (std::size_t o = 0; o < g.out_ch; ++o) {
            VecMap acc(wide, span);
            acc.setConstant(bias ? bias->data()[o] : 0.0);
            for (std::size_t c = 0; c < g.in_ch; ++c) {
                const double* wk = w.data() + (o * g.in_ch + c) * g.kh * g.kw;
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        acc += wk[ky * g.kw + kx] * ConstVecMap(padded + c * wl.plane() + ky * wl.pw + kx, span);
                    }
                }
            }
            double* dst = out.data() + b * out_size + o * out_plane;
            for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                std::copy(wide + oy * wl.pw, wide + oy * wl.pw + g.out_w, dst + oy * g.out_w);
            }
        }
    }
    std::vector<Tensor> parents{input, kernel};
    if (bias) parents.push_back(*bias);
    const bool has_bias = bias.has_value();
    return make_result(
        {g.batch, g.out_ch, g.out_h, g.out_w}, std::move(out), std::move(parents),
        [g, has_bias, in_size, out_plane, out_size](Node& self) {
            auto& pin = *self.parents[0];
            auto& pk = *self.parents[1];
            const WideLayout wl(g);
            const auto span = static_cast<Eigen::Index>(wl.span);
            const bool need_k = pk.requires_grad, need_in = pin.requires_grad;
            if (need_k) pk.ensure_grad();
            if (need_in) pin.ensure_grad();
            double* padded = scratch(0, g.in_ch * wl.plane());
            double* gwide = scratch(1, g.out_ch * wl.span);
            double* dpadded = scratch(2, g.in_ch * wl.plane());
            for (std::size_t b = 0; b < g.batch; ++b) {
                std::fill(gwide, gwide + g.out_ch * wl.span, 0.0);
                for (std::size_t o = 0; o < g.out_ch; ++o) {
                    const double* go = self.grad.data() + b * out_size + o * out_plane;
                    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                        std::copy(go + oy * g.out_w, go + (oy + 1) * g.out_w, gwide + o * wl.span + oy * wl.pw);
                    }
                }
                if (need_k) pad_planes(pin.data.data() + b * in_size, g, wl, padded);
                if (need_in) std::fill(dpadded, dpadded + g.in_ch * wl.plane(), 0.0);
                for (std::size_t o = 0; o < g.out_ch; ++o) {
                    const ConstVecMap gw(gwide + o * wl.span, span);
                    for (std::size_t c = 0; c < g.in_ch; ++c) {
                        const std::size_t k_at = (o * g.in_ch + c) * g.kh * g.kw;
                        for (std::size_t ky = 0; ky < g.kh; ++ky) {
                            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                                const std::size_t off = c * wl.plane() + ky * wl.pw + kx;
                                if (need_k) pk.grad[k_at + ky * g.kw + kx] += gw.dot(ConstVecMap(padded + off, span));
                                if (need_in) VecMap(dpadded + off, span) += pk.data[k_at + ky * g.kw + kx] * gw;
                            }
                        }
                    }
                }
                if (need_in) {
                    for (std::size_t c = 0; c < g.in_ch; ++c) {
                        for (std::size_t y = 0; y < g.height; ++y) {
                            const double* src = dpadded + c * wl.plane() + (y + g.padding) * wl.pw + g.padding;
                            double* dst = pin.grad.data() + b * in_size + (c * g.height + y) * g.width;
                            for (std::size_t x = 0; x < g.width; ++x) dst[x] += src[x];
                        }
                    }
                }
            }
            if (has_bias) {
                auto& pb = *self.parents[2];
                if (pb.requires_grad) {
                    pb.ensure_grad();
                    for (std::size_t b = 0; b < g.batch; ++b) {
                        for (std::size_t o = 0; o < g.out_ch; ++o) {
                            const double* go = self.grad.data() + b * out_size + o * out_plane;
                            double s = 0.0;
                            for (std::size_t i = 0; i < out_plane; ++i) s += go[i];
                            pb.grad[o] += s;
                        }
                    }
                }
            }
        },
        "conv2d");
}

void require_rank4(const Tensor& t, const char* name) {
    if (t.rank() != 4) throw std::invalid_argument(std::string(name) + ": expected [B,C,H,W], got " + shape_str(t.shape()));
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding) {
    return conv2d(input, kernel, std::nullopt, stride, padding);
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const std::optional<Tensor>& bias, std::size_t stride,
              std::size_t padding) {
    require_rank4(input, "conv2d input");
    if (kernel.rank() != 4) throw std::invalid_argument("conv2d: kernel must be [Cout,Cin,kh,kw], got " + shape_str(kernel.shape()));
    if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
    ConvGeometry g{};
    g.batch = input.dim(0);
    g.in_ch = input.dim(1);
    g.height = input.dim(2);
    g.width = input.dim(3);
    g.out_ch = kernel.dim(0);
    g.kh = kernel.dim(2);
    g.kw = kernel.dim(3);
    g.stride = stride;
    g.padding = padding;
    if (kernel.dim(1) != g.in_ch) {
        throw std::invalid_argument("conv2d: kernel " + shape_str(kernel.shape()) + " incompatible with input " +
                                    shape_str(input.shape()));
    }
    if (g.kh > g.height + 2 * padding || g.kw > g.width + 2 * padding) {
        throw std::invalid_argument("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                                    shape_str(input.shape()));
    }
    if (bias && (bias->rank() != 1 || bias->dim(0) != g.out_ch)) {
        throw std::invalid_argument("conv2d: bias shape " + shape_str(bias->shape()) + " does not match " +
                                    std::to_string(g.out_ch) + " output channels");
    }
    g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
    g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;

    if (g.out_ch <= 4 && stride == 1) return conv2d_direct(input, kernel, bias, g);

    const std::size_t col_size = g.col_rows() * g.col_cols();
    const std::size_t in_size = g.in_ch * g.height * g.width;
    const std::size_t out_size = g.out_ch * g.col_cols();
    std::vector<double> out(g.batch * out_size);
    auto in = input.data();
    ConstMatMap weights(kernel.data().data(), static_cast<Eigen::Index>(g.out_ch), static_cast<Eigen::Index>(g.col_rows()));
    double* col = scratch(0, col_size);
    for (std::size_t b = 0; b < g.batch; ++b) {
        im2col(in.data() + b * in_size, g, col);
        MatMap o(out.data() + b * out_size, static_cast<Eigen::Index>(g.out_ch), static_cast<Eigen::Index>(g.col_cols()));
        o.noalias() = weights * ConstMatMap(col, static_cast<Eigen::Index>(g.col_rows()), static_cast<Eigen::Index>(g.col_cols()));
        if (bias) {
            auto bv = bias->data();
            for (std::size_t c = 0; c < g.out_ch; ++c) o.row(static_cast<Eigen::Index>(c)).array() += bv[c];
        }
    }

    std::vector<Tensor> parents{input, kernel};
    if (bias) parents.push_back(*bias);
    const bool has_bias = bias.has_value();
    return make_result({g.batch, g.out_ch, g.out_h, g.out_w}, std::move(out), std::move(parents),
                       [g, has_bias](Node& self) {
                           auto& pin = *self.parents[0];
                           auto& pk = *self.parents[1];
                           const auto rows = static_cast<Eigen::Index>(g.col_rows());
                           const auto ncols = static_cast<Eigen::Index>(g.col_cols());
                           const auto och = static_cast<Eigen::Index>(g.out_ch);
                           const std::size_t col_size = g.col_rows() * g.col_cols();
                           const std::size_t in_size = g.in_ch * g.height * g.width;
                           const std::size_t out_size = g.out_ch * g.col_cols();
                           if (pk.requires_grad) {
                               pk.ensure_grad();
                               MatMap dk(pk.grad.data(), och, rows);
                               double* col = scratch(0, col_size);
                               for (std::size_t b = 0; b < g.batch; ++b) {
                                   im2col(pin.data.data() + b * in_size, g, col);
                                   ConstMatMap go(self.grad.data() + b * out_size, och, ncols);
                                   dk.noalias() += go * ConstMatMap(col, rows, ncols).transpose();
                               }
                           }
                           if (pin.requires_grad) {
                               pin.ensure_grad();
                               ConstMatMap w(pk.data.data(), och, rows);
                               MatMap dcol(scratch(1, col_size), rows, ncols);
                               for (std::size_t b = 0; b < g.batch; ++b) {
                                   ConstMatMap go(self.grad.data() + b * out_size, och, ncols);
                                   dcol.noalias() = w.transpose() * go;
                                   col2im_add(dcol.data(), g, pin.grad.data() + b * in_size);
                               }
                           }
                           if (has_bias) {
                               auto& pb = *self.parents[2];
                               if (pb.requires_grad) {
                                   pb.ensure_grad();
                                   for (std::size_t b = 0; b < g.batch; ++b) {
                                       for (std::size_t c = 0; c < g.out_ch; ++c) {
                                           const double* go = self.grad.data() + b * out_size + c * g.col_cols();
                                           double s = 0.0;
                                           for (std::size_t i = 0; i < g.col_cols(); ++i) s += go[i];
                                           pb.grad[c] += s;
                                       }
                                   }
                               }
                           }
                       },
                       "conv2d");
}

Tensor upsample_nearest(const Tensor& input, std::size_t factor) {
    require_rank4(input, "upsample_nearest");
    if (factor == 0) throw std::invalid_argument("upsample_nearest: factor must be positive");
    const std::size_t planes = input.dim(0) * input.dim(1);
    const std::size_t h = input.dim(2), w = input.dim(3);
    const std::size_t oh = h * factor, ow = w * factor;
    auto in = input.data();
    std::vector<double> out(planes * oh * ow);
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t y = 0; y < h; ++y) {
            const double* src = in.data() + (p * h + y) * w;
            double* dst = out.data() + (p * oh + y * factor) * ow;
            for (std::size_t x = 0; x < w; ++x) std::fill(dst + x * factor, dst + (x + 1) * factor, src[x]);
            for (std::size_t r = 1; r < factor; ++r) std::copy(dst, dst + ow, dst + r * ow);
        }
    }
    return make_result({input.dim(0), input.dim(1), oh, ow}, std::move(out), {input},
                       [planes, h, w, factor](Node& self) {
                           auto& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           const std::size_t oh = h * factor, ow = w * factor;
                           for (std::size_t q = 0; q < planes; ++q) {
                               for (std::size_t y = 0; y < oh; ++y) {
                                   double* dst = p.grad.data() + (q * h + y / factor) * w;
                                   const double* src = self.grad.data() + (q * oh + y) * ow;
                                   for (std::size_t x = 0; x < w; ++x) {
                                       for (std::size_t r = 0; r < factor; ++r) dst[x] += src[x * factor + r];
                                   }
                               }
                           }
                       },
                       "upsample_nearest");
}

Tensor instance_norm(const Tensor& input, double epsilon) {
    require_rank4(input, "instance_norm");
    const std::size_t planes = input.dim(0) * input.dim(1);
    const std::size_t area = input.dim(2) * input.dim(3);
    auto in = input.data();
    std::vector<double> out(in.size());
    std::vector<double> inv_std(planes);
    for (std::size_t p = 0; p < planes; ++p) {
        const double* x = in.data() + p * area;
        double m = 0.0;
        for (std::size_t i = 0; i < area; ++i) m += x[i];
        m /= static_cast<double>(area);
        double var = 0.0;
        for (std::size_t i = 0; i < area; ++i) var += (x[i] - m) * (x[i] - m);
        var /= static_cast<double>(area);
        inv_std[p] = 1.0 / std::sqrt(var + epsilon);
        for (std::size_t i = 0; i < area; ++i) out[p * area + i] = (x[i] - m) * inv_std[p];
    }
    return make_result(input.shape(), std::move(out), {input},
                       [area, inv_std = std::move(inv_std)](Node& self) {
                           auto& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           const double n = static_cast<double>(area);
                           for (std::size_t q = 0; q < inv_std.size(); ++q) {
                               const double* y = self.data.data() + q * area;
                               const double* g = self.grad.data() + q * area;
                               double gm = 0.0, gy = 0.0;
                               for (std::size_t i = 0; i < area; ++i) {
                                   gm += g[i];
                                   gy += g[i] * y[i];
                               }
                               gm /= n;
                               gy /= n;
                               double* dx = p.grad.data() + q * area;
                               for (std::size_t i = 0; i < area; ++i) dx[i] += inv_std[q] * (g[i] - gm - y[i] * gy);
                           }
                       },
                       "instance_norm");
}

Tensor gram(const Tensor& act) {
    if (act.rank() != 3 && act.rank() != 4) {
        throw std::invalid_argument("gram: expected [C,H,W] or [B,C,H,W], got " + shape_str(act.shape()));
    }
    const bool batched = act.rank() == 4;
    const std::size_t off = batched ? 1 : 0;
    const std::size_t batch = batched ? act.dim(0) : 1;
    const std::size_t c = act.dim(off), hw = act.dim(off + 1) * act.dim(off + 2);
    if (hw == 0 || c == 0) throw std::invalid_argument("gram: empty activation");
    const double scale = 1.0 / static_cast<double>(c * hw);
    const auto ci = static_cast<Eigen::Index>(c);
    const auto hwi = static_cast<Eigen::Index>(hw);
    auto in = act.data();
    std::vector<double> out(batch * c * c);
    for (std::size_t b = 0; b < batch; ++b) {
        ConstMatMap f(in.data() + b * c * hw, ci, hwi);
        MatMap gm(out.data() + b * c * c, ci, ci);
        gm.noalias() = f * f.transpose();
        gm *= scale;
    }
    Shape out_shape = batched ? Shape{batch, c, c} : Shape{c, c};
    return make_result(std::move(out_shape), std::move(out), {act},
                       [batch, c, hw, scale](Node& self) {
                           auto& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           const auto ci = static_cast<Eigen::Index>(c);
                           const auto hwi = static_cast<Eigen::Index>(hw);
                           for (std::size_t b = 0; b < batch; ++b) {
                               ConstMatMap f(p.data.data() + b * c * hw, ci, hwi);
                               ConstMatMap g(self.grad.data() + b * c * c, ci, ci);
                               MatMap df(p.grad.data() + b * c * hw, ci, hwi);
                               df.noalias() += scale * (g + g.transpose()) * f;
                           }
                       },
                       "gram");
}

Tensor global_avg_pool(const Tensor& input) {
    require_rank4(input, "global_avg_pool");
    return mean(input, {2, 3});
}

}  // namespace crd
