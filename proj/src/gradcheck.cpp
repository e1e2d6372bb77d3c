#include "headpose/gradcheck.hpp"

#include <cmath>

#include "headpose/errors.hpp"

namespace headpose {

FdReport finite_difference_check(const std::function<double(const VectorXd&)>& f,
                                 const VectorXd& params, const VectorXd& analytic_grad,
                                 double step) {
    if (analytic_grad.size() != params.size())
        throw ShapeMismatch("analytic gradient size does not match parameters");
    FdReport report;
    const double f0 = f(params);
    VectorXd x = params;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        x[i] = params[i] + step;
        const double fp = f(x);
        x[i] = params[i] - step;
        const double fm = f(x);
        x[i] = params[i];

        const double d_plus = (fp - f0) / step;
        const double d_minus = (f0 - fm) / step;
        // One-sided slopes disagreeing at O(1) means the interval crosses a
        // kink; central differencing is meaningless there.
        if (std::abs(d_plus - d_minus) > 1e-2 * (std::abs(d_plus) + std::abs(d_minus) + 1.0)) {
            report.excluded += 1;
            continue;
        }
        const double numeric = (fp - fm) / (2.0 * step);
        const double rel = std::abs(analytic_grad[i] - numeric) /
                           std::max(1e-12, std::abs(analytic_grad[i]) + std::abs(numeric));
        report.checked += 1;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    return report;
}

}  // namespace headpose
