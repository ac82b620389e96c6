#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "crd/tensor.hpp"

namespace crd {

// Elementwise arithmetic. Operands must have identical shapes, or one side
// must hold a single element (scalar broadcast).
enum class BinaryOp { add, sub, mul, div };

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor elementwise(BinaryOp op, const Tensor& a, double b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator+(const Tensor& a, double b);
Tensor operator-(const Tensor& a, double b);
Tensor operator*(const Tensor& a, double b);
Tensor operator*(double a, const Tensor& b);
Tensor operator/(const Tensor& a, double b);
Tensor operator-(const Tensor& a);

// Unary maps.
Tensor square(const Tensor& t);
Tensor sqrt(const Tensor& t);
Tensor abs(const Tensor& t);
Tensor relu(const Tensor& t);
Tensor leaky_relu(const Tensor& t, double slope = 0.2);
Tensor tanh(const Tensor& t);
/// log(1 + exp(x)), evaluated without overflow.
Tensor softplus(const Tensor& t);
/// max(t, floor) elementwise; zero gradient where clamped.
Tensor clamp_min(const Tensor& t, double floor);

enum class ReduceOp { sum, mean };

/// Reduces over the listed axes (kept out of the result shape).
/// An empty axis list is an error; use the overload without axes for a full reduction.
Tensor reduce(ReduceOp op, const Tensor& t, const std::vector<std::size_t>& axes);
Tensor sum(const Tensor& t);
Tensor mean(const Tensor& t);
Tensor sum(const Tensor& t, const std::vector<std::size_t>& axes);
Tensor mean(const Tensor& t, const std::vector<std::size_t>& axes);

/// Euclidean norm over all elements of a rank-1 tensor. The backward pass uses
/// v / max(norm, epsilon) so the gradient at the origin is zero.
Tensor l2_norm(const Tensor& v, double epsilon = 1e-12);

/// out[i] = t[indices[i]] with scatter-add backward.
Tensor gather(const Tensor& t, const std::vector<std::size_t>& indices, Shape out_shape);

/// Selects index along axis 0, dropping that axis.
Tensor select(const Tensor& t, std::size_t index);

// Row operations on matrices [rows, cols].

/// out[p] = m[first[p]] - m[second[p]] for every listed pair.
Tensor row_differences(const Tensor& m, const std::vector<std::size_t>& first,
                       const std::vector<std::size_t>& second);
/// Euclidean norm of every row: [rows, cols] -> [rows]. Gradient guarded like l2_norm.
Tensor row_norms(const Tensor& m, double epsilon = 1e-12);
/// Each row divided by max(norm(row), epsilon).
Tensor normalize_rows(const Tensor& m, double epsilon = 1e-12);
/// out[t] = <m[first[t]], m[second[t]]>.
Tensor row_dots(const Tensor& m, const std::vector<std::size_t>& first,
                const std::vector<std::size_t>& second);

/// Elementwise Huber penalty: 0.5 d^2 for |d| <= 1, |d| - 0.5 otherwise, d = a - b.
Tensor huber(const Tensor& a, const Tensor& b);

// Convolution layers. Tensors are [B, C, H, W].

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding);
Tensor conv2d(const Tensor& input, const Tensor& kernel, const std::optional<Tensor>& bias,
              std::size_t stride, std::size_t padding);
/// Nearest-neighbour upsampling by an integer factor.
Tensor upsample_nearest(const Tensor& input, std::size_t factor = 2);
/// Per-sample, per-channel normalization over H x W, no affine parameters.
Tensor instance_norm(const Tensor& input, double epsilon = 1e-5);
/// Per-sample channel Gram matrix F F^T / (C H W): [C,H,W] -> [C,C], [B,C,H,W] -> [B,C,C].
Tensor gram(const Tensor& act);
/// Mean over H x W: [B,C,H,W] -> [B,C].
Tensor global_avg_pool(const Tensor& input);

}  // namespace crd
