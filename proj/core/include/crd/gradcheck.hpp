#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "crd/tensor.hpp"

namespace crd {

/// Central-difference estimate of df/dx: (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) per coordinate.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps);

struct GradCheckResult {
    double max_error = 0.0;          // worst scaled error over checked coordinates
    std::string worst_tensor;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;

    bool passed(double tolerance) const { return max_error <= tolerance; }
};

struct GradCheckOptions {
    double eps = 1e-6;
    // Coordinates whose one-sided differences disagree by more than this
    // (relative to the gradient scale) straddle a kink and are skipped.
    double kink_threshold = 1e-3;
    // Per-tensor cap on checked coordinates; 0 checks everything.
    std::size_t max_coordinates = 0;
};

/// Compares backward() gradients of loss_fn against central differences for
/// every listed leaf tensor. loss_fn must rebuild the graph on each call.
///
/// The error of coordinate i is |a_i - n_i| / max(|a_i|, |n_i|, s) where
/// s = 1e-3 * max_j |n_j| (floored at 1e-10), so coordinates that are tiny
/// relative to the whole gradient are measured against its scale.
GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::vector<std::pair<std::string, Tensor>> leaves,
                                const GradCheckOptions& options = {});

/// Convenience for a single input: differentiates loss_fn(x) w.r.t. x.
GradCheckResult check_gradient(const std::function<Tensor(const Tensor&)>& loss_fn, const Tensor& x,
                               const GradCheckOptions& options = {});

}  // namespace crd
