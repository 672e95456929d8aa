#ifndef ALT_GRAD_CHECK_HPP
#define ALT_GRAD_CHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "alt/tensor.hpp"

namespace alt {

struct GradCheckReport {
    struct PerParam {
        std::string name;
        double max_rel_err = 0.0;
        double mean_rel_err = 0.0;
    };
    std::vector<PerParam> params;
    double max_rel_err = 0.0;
    double mean_rel_err = 0.0;
    double epsilon = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Central-difference check of the analytic gradient of a deterministic scalar
// function against (f(t+eps) - f(t-eps)) / (2 eps) per coordinate.
// Relative error is |a - n| / max(|a|, |n|, 1e-12).
// f must rebuild its computation from scratch on every call; the checker
// verifies determinism by evaluating twice and comparing bits, and raises a
// contract error on mismatch.
template <class Real>
GradCheckReport grad_check(const std::function<Tensor<Real>()>& f,
                           const std::vector<std::pair<std::string, Tensor<Real>>>& params,
                           Real eps, double tolerance);

}  // namespace alt

#endif
