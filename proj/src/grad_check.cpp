#include "sc2/grad_check.hpp"

#include "sc2/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace sc2 {

GradCheckReport grad_check(const std::function<Tensor64()> & loss, std::vector<Tensor64> params, double rel_tol,
                           const GradCheckOptions & options) {
    if (options.order != 2 && options.order != 4) {
        throw ContractError("grad_check: order must be 2 or 4");
    }
    for (auto & p : params) {
        p.set_requires_grad(true);
        p.clear_grad();
    }
    Tensor64 root = loss();
    backward(root);

    GradCheckReport report;
    std::mt19937_64 rng(options.seed);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto & p = params[k];
        std::vector<double> tape(p.numel(), 0.0);
        if (p.has_grad()) {
            std::copy(p.grad().begin(), p.grad().end(), tape.begin());
        }
        std::vector<std::size_t> elems(p.numel());
        std::iota(elems.begin(), elems.end(), 0);
        if (options.max_elements_per_param && elems.size() > options.max_elements_per_param) {
            std::shuffle(elems.begin(), elems.end(), rng);
            elems.resize(options.max_elements_per_param);
        }
        auto w = p.mutable_data();
        for (std::size_t e : elems) {
            const double orig = w[e];
            double fd;
            {
                NoGradGuard no_grad;
                auto at = [&](double dx) {
                    w[e] = orig + dx;
                    return loss().item();
                };
                const double h = options.step;
                if (options.order == 4) {
                    fd = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
                } else {
                    fd = (at(h) - at(-h)) / (2.0 * h);
                }
                w[e] = orig;
            }
            const double abs_err = std::abs(fd - tape[e]);
            const double denom = std::max({std::abs(fd), std::abs(tape[e]), options.abs_floor});
            const double rel = abs_err / denom;
            ++report.checked;
            report.max_abs_error = std::max(report.max_abs_error, abs_err);
            if (report.checked == 1 || rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = k;
                report.worst_element = e;
                report.worst_tape = tape[e];
                report.worst_fd = fd;
            }
        }
    }
    report.passed = report.max_rel_error < rel_tol;
    return report;
}

std::string describe(const GradCheckReport & r) {
    std::ostringstream os;
    os << "checked=" << r.checked << " max_rel=" << r.max_rel_error << " max_abs=" << r.max_abs_error
       << " worst(param " << r.worst_param << ", elem " << r.worst_element << ": tape " << r.worst_tape << " fd "
       << r.worst_fd << ")";
    return os.str();
}

} // namespace sc2
