#pragma once

#include "sc2/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sc2 {

struct GradCheckOptions {
    double step = 1e-5;
    // |tape - fd| / max(|tape|, |fd|, abs_floor)
    double abs_floor = 1e-8;
    // elements sampled per parameter tensor; 0 checks every element
    std::size_t max_elements_per_param = 0;
    std::uint64_t seed = 1;
    // 2: (f(x+h) - f(x-h)) / 2h. 4: five-point stencil, truncation error
    // O(h^4), for strongly curved objectives where a small h drowns in round-off
    int order = 2;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t checked = 0;
    std::size_t worst_param = 0;
    std::size_t worst_element = 0;
    double worst_tape = 0.0;
    double worst_fd = 0.0;
    bool passed = false;
};

// Central finite differences of a scalar function against tape gradients.
// `loss` must rebuild its graph from the current parameter values on every
// call; parameters are perturbed in place and restored.
GradCheckReport grad_check(const std::function<Tensor64()> & loss, std::vector<Tensor64> params,
                           double rel_tol, const GradCheckOptions & options = {});

std::string describe(const GradCheckReport & report);

} // namespace sc2
