#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace ecnet {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
};

/// Central-difference check of an analytic gradient against f evaluated at
/// theta +- eps along each coordinate. Relative error per coordinate is
/// |a - n| / max(|a|, |n|, 1e-8). Throws if f returns a non-finite value.
GradCheckResult grad_check(const std::function<double(const std::vector<double>&)>& f,
                           const std::vector<double>& theta,
                           const std::vector<double>& analytic_grad, double eps);

}  // namespace ecnet
