#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

namespace dt {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    bool pass = true;
};

// Central-difference check of an analytic gradient. f() must be a
// deterministic scalar function of `params` (read through the span each
// call). For each parameter: numeric = (f(x+eps) - f(x-eps)) / (2 eps),
// compared against analytic with
//     rel = |a - n| / max(|a|, |n|, abs_floor / tol)
// so that the effective tolerance becomes absolute (abs_floor) once both
// gradients are tiny. stride > 1 checks every stride-th parameter, for
// instances too large to sweep fully.
template <typename F>
GradCheckReport grad_check(F&& f, std::span<double> params, std::span<const double> analytic,
                           double eps = 1e-5, double tol = 1e-4, double abs_floor = 1e-6,
                           std::size_t stride = 1) {
    GradCheckReport rep;
    const double denom_floor = abs_floor / tol;
    for (std::size_t i = 0; i < params.size(); i += std::max<std::size_t>(1, stride)) {
        const double saved = params[i];
        params[i] = saved + eps;
        const double fp = f();
        params[i] = saved - eps;
        const double fm = f();
        params[i] = saved;

        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), denom_floor});
        const double rel = std::abs(a - numeric) / denom;
        if (rel > rep.max_rel_err) {
            rep.max_rel_err = rel;
            rep.worst_index = i;
            rep.worst_analytic = a;
            rep.worst_numeric = numeric;
        }
        ++rep.checked;
    }
    rep.pass = rep.max_rel_err <= tol;
    return rep;
}

}  // namespace dt
