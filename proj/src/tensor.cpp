#include "sc2/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace sc2 {

std::size_t shape_numel(const Shape & shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape & shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

bool & grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

template <typename T>
void check_finite(const std::vector<T> & values, const char * op) {
    for (T v : values) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite value produced by ") + op);
        }
    }
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, std::vector<Tensor<T>> inputs,
                      std::function<void(TensorNode<T> &)> backward_fn) {
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("result shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
    }
#ifndef NDEBUG
    check_finite(values, "tensor op");
#endif
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    bool track = false;
    if (grad_mode_flag()) {
        for (const auto & in : inputs) {
            if (in.requires_grad()) {
                track = true;
                break;
            }
        }
    }
    if (track) {
        node->requires_grad = true;
        node->is_leaf = false;
        node->inputs.reserve(inputs.size());
        for (auto & in : inputs) {
            node->inputs.push_back(in.node());
        }
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor<T>(std::move(node));
}

} // namespace detail

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("shape " + shape_str(shape) + " holds " + std::to_string(shape_numel(shape)) +
                             " values, got " + std::to_string(values.size()));
    }
    node_ = std::make_shared<Node>();
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
const Shape & Tensor<T>::shape() const {
    if (!node_) {
        throw ContractError("undefined tensor");
    }
    return node_->shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
    const Shape & s = shape();
    if (axis >= s.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    }
    return s[axis];
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
    if (!node_) {
        throw ContractError("undefined tensor");
    }
    return node_->value;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
    if (!node_) {
        throw ContractError("undefined tensor");
    }
    return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) {
        throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    }
    return node_->value[0];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool flag) {
    if (!node_) {
        throw ContractError("undefined tensor");
    }
    node_->requires_grad = flag;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
    if (!has_grad()) {
        throw ContractError("gradient absent");
    }
    return node_->grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
    if (!node_) {
        throw ContractError("undefined tensor");
    }
    return node_->ensure_grad();
}

template <typename T>
void Tensor<T>::zero_grad() {
    if (node_ && !node_->grad.empty()) {
        std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }
}

template <typename T>
void Tensor<T>::clear_grad() {
    if (node_) {
        node_->grad.clear();
        node_->grad.shrink_to_fit();
    }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(shape(), node_->value, false);
}

template <typename T>
Tensor<T> Tensor<T>::clone(bool requires_grad) const {
    return Tensor(shape(), node_->value, requires_grad);
}

template <typename T>
Tape<T> Tape<T>::record(const Tensor<T> & root) {
    Tape tape;
    tape.root_ = root.node();
    if (!tape.root_ || !tape.root_->requires_grad) {
        return tape;
    }
    // iterative post-order DFS
    std::unordered_set<detail::TensorNode<T> *> visited;
    std::vector<std::pair<detail::TensorNode<T> *, std::size_t>> stack;
    stack.emplace_back(tape.root_.get(), 0);
    visited.insert(tape.root_.get());
    while (!stack.empty()) {
        auto & [node, next] = stack.back();
        if (next < node->inputs.size()) {
            detail::TensorNode<T> * child = node->inputs[next++].get();
            if (child && child->requires_grad && visited.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            tape.order_.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

template <typename T>
void Tape<T>::run_backward() {
    if (!root_ || !root_->requires_grad) {
        return;
    }
    for (auto * node : order_) {
        if (!node->is_leaf) {
            node->grad.assign(node->value.size(), T(0));
        }
    }
    root_->ensure_grad()[0] += T(1);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        detail::TensorNode<T> * node = *it;
        if (node->backward_fn) {
            node->backward_fn(*node);
        }
    }
}

template <typename T>
void backward(const Tensor<T> & root) {
    if (!root.defined() || root.numel() != 1) {
        throw ContractError("backward() requires a scalar root");
    }
    Tape<T>::record(root).run_backward();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void backward<float>(const Tensor<float> &);
template void backward<double>(const Tensor<double> &);
template Tensor<float> detail::make_result<float>(Shape, std::vector<float>, std::vector<Tensor<float>>,
                                                  std::function<void(detail::TensorNode<float> &)>);
template Tensor<double> detail::make_result<double>(Shape, std::vector<double>, std::vector<Tensor<double>>,
                                                    std::function<void(detail::TensorNode<double> &)>);
template void detail::check_finite<float>(const std::vector<float> &, const char *);
template void detail::check_finite<double>(const std::vector<double> &, const char *);

} // namespace sc2
