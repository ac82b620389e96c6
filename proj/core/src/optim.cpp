#include "crd/optim.hpp"

#include <cmath>

#include <Eigen/Core>

namespace crd {

Adam::Adam(std::vector<Tensor> params) : Adam(std::move(params), Options{}) {}

Adam::Adam(std::vector<Tensor> params, Options options) : params_(std::move(params)), options_(options) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void Adam::step(double lr) {
    ++t_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        if (!p.has_grad()) continue;
        const auto n = static_cast<Eigen::Index>(p.numel());
        Eigen::Map<const Eigen::ArrayXd> g(p.grad().data(), n);
        Eigen::Map<Eigen::ArrayXd> w(p.mutable_data().data(), n);
        Eigen::Map<Eigen::ArrayXd> m(m_[i].data(), n);
        Eigen::Map<Eigen::ArrayXd> v(v_[i].data(), n);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.square();
        w -= lr * (m / c1) / ((v / c2).sqrt() + options_.epsilon);
    }
    zero_grad();
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace crd
