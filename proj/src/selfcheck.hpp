#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "model.hpp"

namespace ecnet {

struct SelfCheckEntry {
    std::string component;
    double max_rel_error = 0.0;
};

struct SelfCheckReport {
    double eps = 1e-5;
    std::uint64_t seed = 7;
    double threshold = 1e-4;
    std::vector<SelfCheckEntry> entries;

    bool pass() const;
};

/// Central-difference verification of every hand-derived backward pass on
/// seeded tiny instances: each cell step, the attention block (1 and 2
/// heads), the FC+softmax+cross-entropy head, and the full composite.
/// `inject_sign_error` flips one analytic gradient entry so the harness can
/// prove it catches a wrong derivative.
SelfCheckReport run_selfcheck(double eps, std::uint64_t seed,
                              bool inject_sign_error = false);

std::string selfcheck_report_to_json(const SelfCheckReport& report);

std::vector<double> flatten_params(const std::vector<ParamRef>& refs);
void unflatten_params(const std::vector<double>& theta, std::vector<ParamRef>& refs);

}  // namespace ecnet
