#include "crd/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace crd {

namespace {

std::atomic<std::uint64_t> g_next_seq{1};
thread_local bool t_grad_mode = true;

std::shared_ptr<detail::Node> new_node(Shape shape, detail::Buffer values, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    if (values.size() != n) {
        throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
    return node;
}

detail::Buffer to_buffer(const std::vector<double>& values) { return detail::Buffer(values.begin(), values.end()); }

Tensor make_result_impl(Shape shape, detail::Buffer values, std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backward, const char* op);

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

void detail::Node::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    detail::Buffer values(shape_numel(shape), value);
    return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    return Tensor(new_node(std::move(shape), to_buffer(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(new_node({}, detail::Buffer{value}, requires_grad));
}

void Tensor::check_defined() const {
    if (!node_) throw std::logic_error("use of undefined tensor");
}

const Shape& Tensor::shape() const {
    check_defined();
    return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const {
    check_defined();
    return node_->data.size();
}

std::span<const double> Tensor::data() const {
    check_defined();
    return node_->data;
}

std::span<double> Tensor::mutable_data() {
    check_defined();
    if (node_->backward) throw std::logic_error("mutable_data() on a non-leaf tensor");
    return node_->data;
}

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

bool Tensor::requires_grad() const {
    check_defined();
    return node_->requires_grad;
}

void Tensor::set_requires_grad(bool value) {
    check_defined();
    if (node_->backward) throw std::logic_error("set_requires_grad() on a non-leaf tensor");
    node_->requires_grad = value;
}

bool Tensor::has_grad() const {
    check_defined();
    return !node_->grad.empty();
}

std::span<const double> Tensor::grad() const {
    check_defined();
    return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
    check_defined();
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    check_defined();
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::clear_grad() {
    check_defined();
    node_->grad.clear();
    node_->grad.shrink_to_fit();
}

Tensor Tensor::clone() const {
    check_defined();
    return Tensor(new_node(node_->shape, node_->data, node_->requires_grad));
}

Tensor Tensor::reshape(Shape new_shape) const {
    check_defined();
    if (shape_numel(new_shape) != numel()) {
        throw std::invalid_argument("cannot reshape " + shape_str(shape()) + " to " + shape_str(new_shape));
    }
    return make_result_impl(std::move(new_shape), node_->data, {*this},
                       [](detail::Node& self) {
                           auto& parent = *self.parents[0];
                           if (!parent.requires_grad) return;
                           parent.ensure_grad();
                           for (std::size_t i = 0; i < self.grad.size(); ++i) parent.grad[i] += self.grad[i];
                       },
                       "reshape");
}

const char* Tensor::op_name() const {
    check_defined();
    return node_->op;
}

bool grad_mode_enabled() { return t_grad_mode; }

NoGradGuard::NoGradGuard() : previous_(t_grad_mode) { t_grad_mode = false; }
NoGradGuard::~NoGradGuard() { t_grad_mode = previous_; }

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward, const char* op) {
    return make_result_impl(std::move(shape), to_buffer(values), std::move(parents), std::move(backward), op);
}

namespace {

Tensor make_result_impl(Shape shape, detail::Buffer values, std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backward, const char* op) {
    bool track = false;
    if (t_grad_mode) {
        for (const auto& p : parents) {
            if (p.defined() && p.requires_grad()) {
                track = true;
                break;
            }
        }
    }
    auto node = new_node(std::move(shape), std::move(values), track);
    node->op = op;
    if (track) {
        node->parents.reserve(parents.size());
        for (auto& p : parents) node->parents.push_back(p.node());
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

}  // namespace

BackwardStats backward(const Tensor& loss) {
    if (!loss.defined()) throw std::invalid_argument("backward() on undefined tensor");
    if (loss.numel() != 1) {
        throw std::invalid_argument("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
    }
    BackwardStats stats;
    if (!loss.requires_grad()) return stats;

    // Collect reachable differentiable nodes, then replay in reverse execution order.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<detail::Node*> stack{loss.node().get()};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(),
              [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

    auto* root = loss.node().get();
    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto* n : order) {
        if (!n->backward) continue;
        if (n->grad.empty()) continue;
        n->backward(*n);
        ++stats.operations_replayed;
        // Intermediate adjoints are not needed once propagated.
        if (n != root) {
            n->grad.clear();
            n->grad.shrink_to_fit();
        }
    }
    return stats;
}

Tensor detach(const Tensor& t) {
    // Fresh leaf sharing the values; no parents, no gradient.
    auto node = new_node(t.shape(), detail::Buffer(t.data().begin(), t.data().end()), false);
    node->op = "detach";
    return Tensor(std::move(node));
}

bool all_finite(const Tensor& t) {
    for (double v : t.data()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace crd
