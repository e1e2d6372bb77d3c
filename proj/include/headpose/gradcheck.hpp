#pragma once

#include <functional>

#include "headpose/geometry.hpp"

namespace headpose {

// Central finite differences against an analytic gradient, the oracle every
// gradient path in this repo is checked with.
struct FdReport {
    double max_rel_error = 0.0;
    Eigen::Index worst_index = -1;
    int excluded = 0;  // coordinates whose step straddles a kink
    int checked = 0;
};

// Per coordinate i: central difference (f(x+h e_i) - f(x-h e_i)) / (2h),
// relative error |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
// A coordinate whose forward and backward one-sided slopes disagree wildly is
// straddling a non-differentiable point (L1 sign flip, leaky-relu kink); it is
// counted in `excluded` instead of failing the check.
FdReport finite_difference_check(const std::function<double(const VectorXd&)>& f,
                                 const VectorXd& params, const VectorXd& analytic_grad,
                                 double step = 1e-4);

}  // namespace headpose
