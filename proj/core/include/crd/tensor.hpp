#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace crd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// Cache-line aligned storage. Vectorized reductions choose their scalar head
// from the data address, so aligned buffers make results independent of
// where the allocator places them.
template <class T>
struct CacheAligned {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    CacheAligned() = default;
    template <class U>
    CacheAligned(const CacheAligned<U>&) {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) { ::operator delete(p, alignment); }
    template <class U>
    bool operator==(const CacheAligned<U>&) const { return true; }
};

using Buffer = std::vector<double, CacheAligned<double>>;

// One value in the computation graph. A node with a backward function is an
// operation output; a node without one is a leaf.
struct Node {
    Shape shape;
    Buffer data;
    Buffer grad;  // empty when absent
    bool requires_grad = false;
    std::uint64_t seq = 0;     // execution order, strictly increasing
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    const char* op = "leaf";

    void ensure_grad();
};

}  // namespace detail

/// Dense row-major real array with an optional gradient slot.
///
/// A Tensor is a cheap handle: copies share the same storage. Use clone() for
/// an independent copy. Operations on tensors that require gradients record
/// themselves so backward() can replay the adjoints in reverse.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    /// Direct write access. Only valid on leaves (parameters, inputs).
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t flat_index) const { return data()[flat_index]; }

    bool requires_grad() const;
    void set_requires_grad(bool value);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();
    void clear_grad();

    /// Deep copy of values; the copy is a leaf with the same requires_grad flag.
    Tensor clone() const;
    /// Reshape sharing no graph state beyond a differentiable view.
    Tensor reshape(Shape shape) const;

    const char* op_name() const;

    // Engine internals.
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    void check_defined() const;
    std::shared_ptr<detail::Node> node_;
};

/// Builds an operation result. The graph edge is recorded only when some
/// parent requires gradients and grad mode is enabled.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward, const char* op);

/// Whether new operations record graph edges on this thread.
bool grad_mode_enabled();

/// Disables graph recording for the lifetime of the guard.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

struct BackwardStats {
    std::size_t operations_replayed = 0;
};

/// Populates grad slots of every reachable tensor that requires gradients.
/// Throws std::invalid_argument when loss is not a single-element tensor.
BackwardStats backward(const Tensor& loss);

/// Same values as t, with no gradient path back to t's ancestors.
Tensor detach(const Tensor& t);

bool all_finite(const Tensor& t);

}  // namespace crd
