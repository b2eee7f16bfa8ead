#pragma once

#include <functional>
#include <vector>

#include "laof/tensor.hpp"

namespace laof {

/// A scalar-valued function of a flat parameter vector together with its
/// analytic gradient. Both run in double precision so that central
/// differences on closed-form problems are not drowned by float32 round-off;
/// when validating the float32 graph, `grad` typically returns the graph's
/// gradient widened to double and `value` is an independent double-precision
/// reference of the same computation.
struct DiffFn {
    std::function<double(const std::vector<double>&)> value;
    std::function<std::vector<double>(const std::vector<double>&)> grad;
};

/// Central-difference gradient check with step eps. Returns the max over
/// coordinates of |analytic - central| / max(|analytic|, |central|, 1e-6).
/// Throws NumericError if any function evaluation is non-finite.
double finite_difference_check(const DiffFn& fn, const std::vector<double>& x, double eps);

}  // namespace laof
