#include "gradcheck.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ecnet {

GradCheckResult grad_check(const std::function<double(const std::vector<double>&)>& f,
                           const std::vector<double>& theta,
                           const std::vector<double>& analytic_grad, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be > 0");
    if (theta.size() != analytic_grad.size())
        throw std::invalid_argument("grad_check: gradient length " +
                                    std::to_string(analytic_grad.size()) +
                                    " != parameter length " + std::to_string(theta.size()));

    GradCheckResult result;
    std::vector<double> probe = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        probe[i] = theta[i] + eps;
        const double f_plus = f(probe);
        probe[i] = theta[i] - eps;
        const double f_minus = f(probe);
        probe[i] = theta[i];
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
            throw std::runtime_error("grad_check: non-finite loss at coordinate " +
                                     std::to_string(i));
        const double numeric = (f_plus - f_minus) / (2.0 * eps);
        const double a = analytic_grad[i];
        const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
        const double rel = std::fabs(a - numeric) / denom;
        if (rel > result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_index = i;
        }
    }
    return result;
}

}  // namespace ecnet
