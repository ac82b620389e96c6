#pragma once

#include <cstddef>
#include <vector>

#include "crd/tensor.hpp"

namespace crd {

/// Adaptive moment estimation over a fixed list of leaf tensors.
class Adam {
public:
    struct Options {
        double beta1 = 0.5;
        double beta2 = 0.999;
        double epsilon = 1e-8;
    };

    explicit Adam(std::vector<Tensor> params);
    Adam(std::vector<Tensor> params, Options options);

    /// Applies one update with learning rate lr, then zeroes the gradients.
    /// Tensors without a gradient slot are left untouched.
    void step(double lr);
    void zero_grad();
    std::size_t steps_taken() const { return t_; }

private:
    std::vector<Tensor> params_;
    Options options_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

}  // namespace crd
