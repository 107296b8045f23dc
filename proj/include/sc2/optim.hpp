#pragma once

#include "sc2/tensor.hpp"

#include <cstdint>
#include <vector>

namespace sc2 {

struct AdamWOptions {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Decoupled weight decay Adam. Moments are kept in the parameter precision.
template <typename T>
class AdamW {
public:
    AdamW(std::vector<Tensor<T>> params, AdamWOptions options = {});

    // Applies one update from the parameters' current grads. Every parameter
    // must carry a grad (zero is fine).
    void step();
    void zero_grad();

    std::int64_t step_count() const { return step_; }
    const AdamWOptions & options() const { return options_; }
    void set_lr(double lr) { options_.lr = lr; }
    const std::vector<Tensor<T>> & params() const { return params_; }
    const std::vector<std::vector<T>> & first_moments() const { return m_; }
    const std::vector<std::vector<T>> & second_moments() const { return v_; }

private:
    std::vector<Tensor<T>> params_;
    AdamWOptions options_;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
    std::int64_t step_ = 0;
};

} // namespace sc2
