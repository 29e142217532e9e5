#pragma once

#include <functional>

#include "eclab/tape.hpp"

namespace eclab {

/// Builds a scalar on `tape` from the tracked input `x`.
using ScalarFn = std::function<Var<double>(Tape<double>& tape, Var<double> x)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  /// Smallest max/min kink distance seen at the evaluation point; callers
  /// reject points where this is below 10 * step.
  double kink_margin = 0.0;
};

/// Central finite differences against the tape gradient, coordinate by
/// coordinate: max |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
/// Throws Error naming the coordinate when an evaluation is non-finite.
GradCheckResult grad_check(const ScalarFn& f, const Tensor<double>& x, double step = 1e-5);

}  // namespace eclab
