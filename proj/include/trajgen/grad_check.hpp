#pragma once

#include <functional>
#include <string>
#include <vector>

#include "trajgen/nn.hpp"

namespace trajgen {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t param_count = 0;

    bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

/// Compares analytic gradients against central finite differences.
///
/// `loss_backward` must zero gradients, run a forward pass, accumulate
/// gradients for it, and return the loss. `loss_forward` must evaluate the
/// same loss without touching gradients. Intended for nets under ~1e4
/// parameters; every scalar is checked.
inline GradCheckReport grad_check(std::vector<ParamView>& params,
                                  const std::function<double()>& loss_backward,
                                  const std::function<double()>& loss_forward,
                                  double h = 1e-5) {
    GradCheckReport report;
    loss_backward();
    std::vector<Vec> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.emplace_back(p.grad, p.grad + p.size);

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        ParamView& p = params[pi];
        for (std::size_t i = 0; i < p.size; ++i) {
            const double saved = p.value[i];
            p.value[i] = saved + h;
            const double lp = loss_forward();
            p.value[i] = saved - h;
            const double lm = loss_forward();
            p.value[i] = saved;
            const double numeric = (lp - lm) / (2.0 * h);
            const double a = analytic[pi][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = p.name + "[" + std::to_string(i) + "]";
            }
            ++report.param_count;
        }
    }
    return report;
}

}  // namespace trajgen
