#include "crd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crd {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_grad: eps must be positive");
    Tensor probe = x.clone();
    probe.set_requires_grad(false);
    auto values = probe.mutable_data();
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + eps;
        const double up = f(probe);
        values[i] = saved - eps;
        const double down = f(probe);
        values[i] = saved;
        out[i] = (up - down) / (2.0 * eps);
    }
    return Tensor::from(x.shape(), std::move(out));
}

GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::vector<std::pair<std::string, Tensor>> leaves,
                                const GradCheckOptions& options) {
    for (auto& [name, t] : leaves) {
        if (std::string(t.op_name()) != "leaf") throw std::invalid_argument("check_gradients: " + name + " is not a leaf");
        t.set_requires_grad(true);
        t.clear_grad();
    }
    backward(loss_fn());

    auto eval = [&]() {
        NoGradGuard guard;
        return loss_fn().item();
    };
    const double base = eval();

    struct Sample {
        std::size_t leaf, index;
        double analytic, numeric, one_sided_gap;
    };
    std::vector<Sample> samples;
    double scale = 0.0;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        Tensor& t = leaves[l].second;
        std::vector<double> analytic(t.numel(), 0.0);
        if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
        auto values = t.mutable_data();
        const std::size_t n = values.size();
        const std::size_t step = (options.max_coordinates == 0 || n <= options.max_coordinates)
                                     ? 1
                                     : (n + options.max_coordinates - 1) / options.max_coordinates;
        for (std::size_t i = 0; i < n; i += step) {
            const double saved = values[i];
            values[i] = saved + options.eps;
            const double up = eval();
            values[i] = saved - options.eps;
            const double down = eval();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * options.eps);
            const double gap = std::fabs((up - base) - (base - down)) / options.eps;
            samples.push_back({l, i, analytic[i], numeric, gap});
            scale = std::max({scale, std::fabs(numeric), std::fabs(analytic[i])});
        }
    }

    GradCheckResult result;
    const double floor = std::max(1e-3 * scale, 1e-10);
    for (const auto& s : samples) {
        if (s.one_sided_gap > options.kink_threshold * std::max(scale, 1e-10)) {
            ++result.skipped_kinks;
            continue;
        }
        ++result.checked;
        const double denom = std::max({std::fabs(s.analytic), std::fabs(s.numeric), floor});
        const double err = std::fabs(s.analytic - s.numeric) / denom;
        if (err > result.max_error || result.checked == 1) {
            if (err >= result.max_error) {
                result.max_error = err;
                result.worst_tensor = leaves[s.leaf].first;
                result.worst_index = s.index;
                result.analytic_at_worst = s.analytic;
                result.numeric_at_worst = s.numeric;
            }
        }
    }
    return result;
}

GradCheckResult check_gradient(const std::function<Tensor(const Tensor&)>& loss_fn, const Tensor& x,
                               const GradCheckOptions& options) {
    Tensor leaf = x.clone();
    return check_gradients([&]() { return loss_fn(leaf); }, {{"x", leaf}}, options);
}

}  // namespace crd
