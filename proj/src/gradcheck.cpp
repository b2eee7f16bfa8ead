#include "laof/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "laof/errors.hpp"

namespace laof {

double finite_difference_check(const DiffFn& fn, const std::vector<double>& x, double eps) {
    if (eps <= 0.0) throw UsageError("finite_difference_check: eps must be positive");
    const std::vector<double> analytic = fn.grad(x);
    if (analytic.size() != x.size()) {
        throw ShapeError("finite_difference_check: gradient size mismatch");
    }
    auto eval = [&](const std::vector<double>& p) {
        const double v = fn.value(p);
        if (!std::isfinite(v)) throw NumericError("finite_difference_check: non-finite value");
        return v;
    };
    double worst = 0.0;
    std::vector<double> p = x;
    for (size_t i = 0; i < x.size(); ++i) {
        p[i] = x[i] + eps;
        const double hi = eval(p);
        p[i] = x[i] - eps;
        const double lo = eval(p);
        p[i] = x[i];
        const double fd = (hi - lo) / (2.0 * eps);
        const double an = analytic[i];
        if (!std::isfinite(an)) throw NumericError("finite_difference_check: non-finite gradient");
        const double rel = std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-6});
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace laof
