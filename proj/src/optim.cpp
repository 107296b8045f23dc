#include "sc2/optim.hpp"

#include <cmath>

namespace sc2 {

template <typename T>
AdamW<T>::AdamW(std::vector<Tensor<T>> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto & p : params_) {
        m_.emplace_back(p.numel(), T(0));
        v_.emplace_back(p.numel(), T(0));
    }
}

template <typename T>
void AdamW<T>::step() {
    for (const auto & p : params_) {
        if (!p.has_grad()) {
            throw ContractError("AdamW step on parameter without gradient " + shape_str(p.shape()));
        }
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
    const T lr = static_cast<T>(options_.lr);
    const T b1 = static_cast<T>(options_.beta1);
    const T b2 = static_cast<T>(options_.beta2);
    const T eps = static_cast<T>(options_.eps);
    const T decay = static_cast<T>(1.0 - options_.lr * options_.weight_decay);
    const T step_size = static_cast<T>(options_.lr / bc1);
    const T rbc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto w = params_[k].mutable_data();
        auto g = params_[k].grad();
        auto & m = m_[k];
        auto & v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            if (lr == T(0)) {
                continue;
            }
            w[i] *= decay;
            w[i] -= step_size * m[i] / (std::sqrt(v[i]) * rbc2 + eps);
        }
    }
}

template <typename T>
void AdamW<T>::zero_grad() {
    for (auto & p : params_) {
        auto g = p.mutable_grad();
        std::fill(g.begin(), g.end(), T(0));
    }
}

template class AdamW<float>;
template class AdamW<double>;

} // namespace sc2
