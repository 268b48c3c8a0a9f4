#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "homtopo/core/errors.hpp"

namespace homtopo {

struct DichotomyResult {
    double x = 0.0;
    double value = 0.0;
    int iterations = 0;
};

/// Root of F(x) = target for a non-decreasing F on [lo, hi] by bisection.
/// Stops once |F(x) - target| <= tol or after max_iter halvings.
inline DichotomyResult dichotomy(const std::function<double(double)> &f, double target, double lo, double hi,
                                 double tol, int max_iter = 200) {
    double flo = f(lo), fhi = f(hi);
    if (flo > target + tol || fhi < target - tol)
        throw NumericalError("dichotomy bracket [" + std::to_string(lo) + ", " + std::to_string(hi) +
                             "] does not contain the target");
    DichotomyResult r;
    if (std::abs(flo - target) <= tol) return {lo, flo, 0};
    if (std::abs(fhi - target) <= tol) return {hi, fhi, 0};
    for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
        r.x = 0.5 * (lo + hi);
        r.value = f(r.x);
        if (std::abs(r.value - target) <= tol) return r;
        if (r.value < target) lo = r.x;
        else hi = r.x;
    }
    r.iterations = max_iter;
    return r;
}

}  // namespace homtopo
