#pragma once

// Dense row-major tensors with eager reverse-mode autodiff.
//
// Every op that receives at least one input with requires_grad (while grad
// mode is enabled) links its output to those inputs and stores a backward
// rule. backward() sorts the reachable graph topologically into a Tape and
// runs the rules in reverse order, once each.

#include "sc2/error.hpp"

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sc2 {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape & shape);
std::string shape_str(const Shape & shape);

namespace detail {

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad; // empty == absent
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<TensorNode>> inputs;
    // reads this node's grad, accumulates into inputs' grads
    std::function<void(TensorNode &)> backward_fn;

    std::vector<T> & ensure_grad() {
        if (grad.empty()) {
            grad.assign(value.size(), T(0));
        }
        return grad;
    }
};

bool & grad_mode_flag();

} // namespace detail

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard &) = delete;
    NoGradGuard & operator=(const NoGradGuard &) = delete;

private:
    bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

template <typename T>
class Tensor {
public:
    using value_type = T;
    using Node = detail::TensorNode<T>;

    Tensor() = default;
    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape & shape() const;
    std::size_t dim(std::size_t axis) const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const { return node_ ? node_->value.size() : 0; }

    std::span<const T> data() const;
    // in-place mutation is reserved for parameters (optimizer, init, loading)
    std::span<T> mutable_data();
    T item() const;
    T at(std::size_t i) const { return data()[i]; }
    T at(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != rank()) {
            throw DimensionError("index rank " + std::to_string(idx.size()) + " on tensor " + shape_str(shape()));
        }
        std::size_t off = 0, d = 0;
        for (std::size_t i : idx) {
            if (i >= shape()[d]) {
                throw DimensionError("index out of range on tensor " + shape_str(shape()));
            }
            off = off * shape()[d++] + i;
        }
        return data()[off];
    }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool flag);
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    std::span<const T> grad() const;
    std::span<T> mutable_grad();
    void zero_grad();
    void clear_grad();

    // same values, no history, no grad
    Tensor detach() const;
    Tensor clone(bool requires_grad = false) const;

    const std::shared_ptr<Node> & node() const { return node_; }
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<Node> node_;
};

// Ordered list of recorded operations reachable from a root; inputs precede
// their consumers.
template <typename T>
class Tape {
public:
    static Tape record(const Tensor<T> & root);

    std::size_t size() const { return order_.size(); }
    const std::vector<detail::TensorNode<T> *> & order() const { return order_; }

    // seeds d(root)/d(root) = 1 and runs every backward rule once, in reverse
    void run_backward();

private:
    std::shared_ptr<detail::TensorNode<T>> root_;
    std::vector<detail::TensorNode<T> *> order_;
};

// Populates grad on every requires_grad leaf reachable from a scalar root.
// Leaf grads accumulate across calls; intermediates are recomputed.
template <typename T>
void backward(const Tensor<T> & root);

namespace detail {

// Builds an op result. Links inputs only when recording is on and some input
// requires grad.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, std::vector<Tensor<T>> inputs,
                      std::function<void(TensorNode<T> &)> backward_fn);

template <typename T>
void check_finite(const std::vector<T> & values, const char * op);

} // namespace detail

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

} // namespace sc2
