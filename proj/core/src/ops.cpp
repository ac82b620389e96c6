#include "crd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace crd {

namespace {

using detail::Node;

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

const char* binary_name(BinaryOp op) {
    switch (op) {
        case BinaryOp::add: return "add";
        case BinaryOp::sub: return "sub";
        case BinaryOp::mul: return "mul";
        case BinaryOp::div: return "div";
    }
    return "?";
}

// f(x) with derivative df(x, y) where y = f(x).
template <typename F, typename DF>
Tensor unary(const Tensor& t, F f, DF df, const char* name) {
    auto in = t.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
    return make_result(t.shape(), std::move(out), {t},
                       [df](Node& self) {
                           auto& p = parent(self, 0);
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                               p.grad[i] += self.grad[i] * df(p.data[i], self.data[i]);
                           }
                       },
                       name);
}

}  // namespace

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
    const bool same = a.shape() == b.shape();
    const bool a_scalar = a.numel() == 1;
    const bool b_scalar = b.numel() == 1;
    if (!same && !a_scalar && !b_scalar) {
        throw std::invalid_argument(std::string(binary_name(op)) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
    const Shape out_shape = same ? a.shape() : (b_scalar ? a.shape() : b.shape());
    const std::size_t n = shape_numel(out_shape);
    const std::size_t sa = (a.numel() == n) ? 1 : 0;
    const std::size_t sb = (b.numel() == n) ? 1 : 0;
    auto da = a.data();
    auto db = b.data();
    std::vector<double> out(n);
    switch (op) {
        case BinaryOp::add: for (std::size_t i = 0; i < n; ++i) out[i] = da[i * sa] + db[i * sb]; break;
        case BinaryOp::sub: for (std::size_t i = 0; i < n; ++i) out[i] = da[i * sa] - db[i * sb]; break;
        case BinaryOp::mul: for (std::size_t i = 0; i < n; ++i) out[i] = da[i * sa] * db[i * sb]; break;
        case BinaryOp::div: for (std::size_t i = 0; i < n; ++i) out[i] = da[i * sa] / db[i * sb]; break;
    }
    return make_result(out_shape, std::move(out), {a, b},
                       [op, sa, sb](Node& self) {
                           auto& pa = parent(self, 0);
                           auto& pb = parent(self, 1);
                           const std::size_t n = self.grad.size();
                           const auto& g = self.grad;
                           if (pa.requires_grad) {
                               pa.ensure_grad();
                               for (std::size_t i = 0; i < n; ++i) {
                                   double d = 0.0;
                                   switch (op) {
                                       case BinaryOp::add:
                                       case BinaryOp::sub: d = g[i]; break;
                                       case BinaryOp::mul: d = g[i] * pb.data[i * sb]; break;
                                       case BinaryOp::div: d = g[i] / pb.data[i * sb]; break;
                                   }
                                   pa.grad[i * sa] += d;
                               }
                           }
                           if (pb.requires_grad) {
                               pb.ensure_grad();
                               for (std::size_t i = 0; i < n; ++i) {
                                   double d = 0.0;
                                   switch (op) {
                                       case BinaryOp::add: d = g[i]; break;
                                       case BinaryOp::sub: d = -g[i]; break;
                                       case BinaryOp::mul: d = g[i] * pa.data[i * sa]; break;
                                       case BinaryOp::div: {
                                           const double bv = pb.data[i * sb];
                                           d = -g[i] * pa.data[i * sa] / (bv * bv);
                                           break;
                                       }
                                   }
                                   pb.grad[i * sb] += d;
                               }
                           }
                       },
                       binary_name(op));
}

Tensor elementwise(BinaryOp op, const Tensor& a, double b) {
    switch (op) {
        case BinaryOp::add: return unary(a, [b](double x) { return x + b; }, [](double, double) { return 1.0; }, "add_scalar");
        case BinaryOp::sub: return unary(a, [b](double x) { return x - b; }, [](double, double) { return 1.0; }, "sub_scalar");
        case BinaryOp::mul: return unary(a, [b](double x) { return x * b; }, [b](double, double) { return b; }, "mul_scalar");
        case BinaryOp::div: return unary(a, [b](double x) { return x / b; }, [b](double, double) { return 1.0 / b; }, "div_scalar");
    }
    throw std::logic_error("unknown binary op");
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::div, a, b); }

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator+(const Tensor& a, double b) { return elementwise(BinaryOp::add, a, b); }
Tensor operator-(const Tensor& a, double b) { return elementwise(BinaryOp::sub, a, b); }
Tensor operator*(const Tensor& a, double b) { return elementwise(BinaryOp::mul, a, b); }
Tensor operator*(double a, const Tensor& b) { return elementwise(BinaryOp::mul, b, a); }
Tensor operator/(const Tensor& a, double b) { return elementwise(BinaryOp::div, a, b); }
Tensor operator-(const Tensor& a) { return elementwise(BinaryOp::mul, a, -1.0); }

Tensor square(const Tensor& t) {
    return unary(t, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; }, "square");
}

Tensor sqrt(const Tensor& t) {
    return unary(t, [](double x) { return std::sqrt(x); },
                 [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; }, "sqrt");
}

Tensor abs(const Tensor& t) {
    return unary(t, [](double x) { return std::fabs(x); },
                 [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }, "abs");
}

Tensor relu(const Tensor& t) {
    return unary(t, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }, "relu");
}

Tensor leaky_relu(const Tensor& t, double slope) {
    return unary(t, [slope](double x) { return x > 0.0 ? x : slope * x; },
                 [slope](double x, double) { return x > 0.0 ? 1.0 : slope; }, "leaky_relu");
}

Tensor tanh(const Tensor& t) {
    return unary(t, [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Tensor softplus(const Tensor& t) {
    return unary(t, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); },
                 [](double x, double) {
                     // sigmoid(x)
                     if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                     const double e = std::exp(x);
                     return e / (1.0 + e);
                 },
                 "softplus");
}

Tensor clamp_min(const Tensor& t, double floor) {
    return unary(t, [floor](double x) { return x > floor ? x : floor; },
                 [floor](double x, double) { return x > floor ? 1.0 : 0.0; }, "clamp_min");
}

Tensor reduce(ReduceOp op, const Tensor& t, const std::vector<std::size_t>& axes) {
    if (axes.empty()) throw std::invalid_argument("reduce: empty axis set");
    const auto& shape = t.shape();
    std::vector<bool> reduced(shape.size(), false);
    for (auto ax : axes) {
        if (ax >= shape.size()) {
            throw std::invalid_argument("reduce: axis " + std::to_string(ax) + " invalid for shape " + shape_str(shape));
        }
        if (reduced[ax]) throw std::invalid_argument("reduce: duplicate axis " + std::to_string(ax));
        reduced[ax] = true;
    }
    Shape out_shape;
    std::size_t count = 1;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (reduced[i]) count *= shape[i];
        else out_shape.push_back(shape[i]);
    }
    if (count == 0) throw std::invalid_argument("reduce: empty reduction");

    // Map every input element to its output slot.
    const std::size_t n = t.numel();
    std::vector<std::size_t> target(n);
    {
        std::vector<std::size_t> idx(shape.size(), 0);
        for (std::size_t flat = 0; flat < n; ++flat) {
            std::size_t o = 0;
            for (std::size_t d = 0; d < shape.size(); ++d) {
                if (!reduced[d]) o = o * shape[d] + idx[d];
            }
            target[flat] = o;
            for (std::size_t d = shape.size(); d-- > 0;) {
                if (++idx[d] < shape[d]) break;
                idx[d] = 0;
            }
        }
    }
    const double scale = op == ReduceOp::mean ? 1.0 / static_cast<double>(count) : 1.0;
    std::vector<double> out(shape_numel(out_shape), 0.0);
    auto in = t.data();
    for (std::size_t i = 0; i < n; ++i) out[target[i]] += in[i];
    if (scale != 1.0) {
        for (auto& v : out) v *= scale;
    }
    return make_result(std::move(out_shape), std::move(out), {t},
                       [target = std::move(target), scale](Node& self) {
                           auto& p = parent(self, 0);
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           for (std::size_t i = 0; i < target.size(); ++i) p.grad[i] += scale * self.grad[target[i]];
                       },
                       op == ReduceOp::sum ? "sum" : "mean");
}

namespace {

Tensor reduce_all(const Tensor& t, double scale, const char* name) {
    if (t.numel() == 0) throw std::invalid_argument("reduce: empty reduction");
    auto in = t.data();
    // Pairwise summation keeps accumulation error independent of ordering details.
    auto pairwise = [&](auto&& self, std::size_t lo, std::size_t hi) -> double {
        if (hi - lo <= 64) {
            double s = 0.0;
            for (std::size_t i = lo; i < hi; ++i) s += in[i];
            return s;
        }
        const std::size_t mid = lo + (hi - lo) / 2;
        return self(self, lo, mid) + self(self, mid, hi);
    };
    const double total = pairwise(pairwise, 0, in.size()) * scale;
    return make_result({}, {total}, {t},
                       [scale](Node& self) {
                           auto& p = parent(self, 0);
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           const double g = self.grad[0] * scale;
                           for (auto& v : p.grad) v += g;
                       },
                       name);
}

}  // namespace

Tensor sum(const Tensor& t) { return reduce_all(t, 1.0, "sum"); }
Tensor mean(const Tensor& t) { return reduce_all(t, 1.0 / static_cast<double>(t.numel()), "mean"); }
Tensor sum(const Tensor& t, const std::vector<std::size_t>& axes) { return reduce(ReduceOp::sum, t, axes); }
Tensor mean(const Tensor& t, const std::vector<std::size_t>& axes) { return reduce(ReduceOp::mean, t, axes); }

Tensor l2_norm(const Tensor& v, double epsilon) {
    if (v.rank() != 1) throw std::invalid_argument("l2_norm: expected rank-1 tensor, got " + shape_str(v.shape()));
    if (v.numel() == 0) throw std::invalid_argument("l2_norm: empty vector");
    double ss = 0.0;
    for (double x : v.data()) ss += x * x;
    const double norm = std::sqrt(ss);
    return make_result({}, {norm}, {v},
                       [epsilon](Node& self) {
                           auto& p = parent(self, 0);
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           const double g = self.grad[0] / std::max(self.data[0], epsilon);
                           for (std::size_t i = 0; i < p.data.size(); ++i) p.grad[i] += g * p.data[i];
                       },
                       "l2_norm");
}

Tensor gather(const Tensor& t, const std::vector<std::size_t>& indices, Shape out_shape) {
    if (shape_numel(out_shape) != indices.size()) {
        throw std::invalid_argument("gather: " + std::to_string(indices.size()) + " indices for shape " +
                                    shape_str(out_shape));
    }
    auto in = t.data();
    std::vector<double> out(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= in.size()) throw std::out_of_range("gather: index out of range");
        out[i] = in[indices[i]];
    }
    return make_result(std::move(out_shape), std::move(out), {t},
                       [indices](Node& self) {
                           auto& p = parent(self, 0);
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           for (std::size_t i = 0; i < indices.size(); ++i) p.grad[indices[i]] += self.grad[i];
                       },
                       "gather");
}

Tensor select(const Tensor& t, std::size_t index) {
    if (t.rank() == 0) throw std::invalid_argument("select: rank-0 tensor");
    if (index >= t.dim(0)) throw std::out_of_range("select: index out of range");
    Shape out_shape(t.shape().begin() + 1, t.shape().end());
    const std::size_t stride = shape_numel(out_shape);
    std::vector<std::size_t> idx(stride);
    std::iota(idx.begin(), idx.end(), index * stride);
    return gather(t, idx, std::move(out_shape));
}

namespace {

void require_matrix(const Tensor& m, const char* name) {
    if (m.rank() != 2) throw std::invalid_argument(std::string(name) + ": expected matrix, got " + shape_str(m.shape()));
}

}  // namespace

Tensor row_differences(const Tensor& m, const std::vector<std::size_t>& first,
                       const std::vector<std::size_t>& second) {
    require_matrix(m, "row_differences");
    if (first.size() != second.size()) throw std::invalid_argument("row_differences: index lists differ in length");
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    auto in = m.data();
    std::vector<double> out(first.size() * cols);
    for (std::size_t p = 0; p < first.size(); ++p) {
        if (first[p] >= rows || second[p] >= rows) throw std::out_of_range("row_differences: row index");
        const double* a = &in[first[p] * cols];
        const double* b = &in[second[p] * cols];
        double* o = &out[p * cols];
        for (std::size_t c = 0; c < cols; ++c) o[c] = a[c] - b[c];
    }
    return make_result({first.size(), cols}, std::move(out), {m},
                       [first, second, cols](Node& self) {
                           auto& p = parent(self, 0);
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           for (std::size_t r = 0; r < first.size(); ++r) {
                               const double* g = &self.grad[r * cols];
                               double* ga = &p.grad[first[r] * cols];
                               double* gb = &p.grad[second[r] * cols];
                               for (std::size_t c = 0; c < cols; ++c) {
                                   ga[c] += g[c];
                                   gb[c] -= g[c];
                               }
                           }
                       },
                       "row_differences");
}

Tensor row_norms(const Tensor& m, double epsilon) {
    require_matrix(m, "row_norms");
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    auto in = m.data();
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double ss = 0.0;
        for (std::size_t c = 0; c < cols; ++c) ss += in[r * cols + c] * in[r * cols + c];
        out[r] = std::sqrt(ss);
    }
    return make_result({rows}, std::move(out), {m},
                       [cols, epsilon](Node& self) {
                           auto& p = parent(self, 0);
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           for (std::size_t r = 0; r < self.data.size(); ++r) {
                               const double g = self.grad[r] / std::max(self.data[r], epsilon);
                               for (std::size_t c = 0; c < cols; ++c) p.grad[r * cols + c] += g * p.data[r * cols + c];
                           }
                       },
                       "row_norms");
}

Tensor normalize_rows(const Tensor& m, double epsilon) {
    require_matrix(m, "normalize_rows");
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    auto in = m.data();
    std::vector<double> out(rows * cols);
    std::vector<double> denom(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double ss = 0.0;
        for (std::size_t c = 0; c < cols; ++c) ss += in[r * cols + c] * in[r * cols + c];
        denom[r] = std::max(std::sqrt(ss), epsilon);
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = in[r * cols + c] / denom[r];
    }
    return make_result({rows, cols}, std::move(out), {m},
                       [cols, epsilon, denom = std::move(denom)](Node& self) {
                           auto& p = parent(self, 0);
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           for (std::size_t r = 0; r < denom.size(); ++r) {
                               const double* y = &self.data[r * cols];
                               const double* g = &self.grad[r * cols];
                               double* out = &p.grad[r * cols];
                               // Below the guard the denominator is constant.
                               const bool clamped = denom[r] <= epsilon;
                               double yg = 0.0;
                               if (!clamped) {
                                   for (std::size_t c = 0; c < cols; ++c) yg += y[c] * g[c];
                               }
                               for (std::size_t c = 0; c < cols; ++c) out[c] += (g[c] - y[c] * yg) / denom[r];
                           }
                       },
                       "normalize_rows");
}

Tensor row_dots(const Tensor& m, const std::vector<std::size_t>& first, const std::vector<std::size_t>& second) {
    require_matrix(m, "row_dots");
    if (first.size() != second.size()) throw std::invalid_argument("row_dots: index lists differ in length");
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    auto in = m.data();
    std::vector<double> out(first.size());
    for (std::size_t t = 0; t < first.size(); ++t) {
        if (first[t] >= rows || second[t] >= rows) throw std::out_of_range("row_dots: row index");
        const double* a = &in[first[t] * cols];
        const double* b = &in[second[t] * cols];
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += a[c] * b[c];
        out[t] = s;
    }
    return make_result({first.size()}, std::move(out), {m},
                       [first, second, cols](Node& self) {
                           auto& p = parent(self, 0);
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           for (std::size_t t = 0; t < first.size(); ++t) {
                               const double g = self.grad[t];
                               const double* a = &p.data[first[t] * cols];
                               const double* b = &p.data[second[t] * cols];
                               double* ga = &p.grad[first[t] * cols];
                               double* gb = &p.grad[second[t] * cols];
                               for (std::size_t c = 0; c < cols; ++c) {
                                   ga[c] += g * b[c];
                                   gb[c] += g * a[c];
                               }
                           }
                       },
                       "row_dots");
}

Tensor huber(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("huber: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    auto da = a.data();
    auto db = b.data();
    std::vector<double> out(da.size());
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = std::fabs(da[i] - db[i]);
        out[i] = d <= 1.0 ? 0.5 * d * d : d - 0.5;
    }
    return make_result(a.shape(), std::move(out), {a, b},
                       [](Node& self) {
                           auto& pa = parent(self, 0);
                           auto& pb = parent(self, 1);
                           if (pa.requires_grad) pa.ensure_grad();
                           if (pb.requires_grad) pb.ensure_grad();
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                               const double d = pa.data[i] - pb.data[i];
                               const double slope = std::clamp(d, -1.0, 1.0);
                               if (pa.requires_grad) pa.grad[i] += self.grad[i] * slope;
                               if (pb.requires_grad) pb.grad[i] -= self.grad[i] * slope;
                           }
                       },
                       "huber");
}

}  // namespace crd
