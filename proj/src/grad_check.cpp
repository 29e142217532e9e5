#include "eclab/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace eclab {
namespace {

double evaluate(const ScalarFn& f, const Tensor<double>& x, std::size_t coordinate) {
  Tape<double> tape(false);
  double y = f(tape, tape.variable(x)).value().item();
  if (!std::isfinite(y)) throw Error("grad_check: non-finite value at coordinate " + std::to_string(coordinate));
  return y;
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const Tensor<double>& x, double step) {
  Tape<double> tape(false);
  auto input = tape.variable(x);
  auto out = f(tape, input);
  tape.backward(out);
  const Tensor<double> analytic = tape.grad(input);

  GradCheckResult result;
  result.kink_margin = tape.kink_margin();
  Tensor<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(analytic[i])) throw Error("grad_check: non-finite gradient at coordinate " + std::to_string(i));
    probe[i] = x[i] + step;
    const double up = evaluate(f, probe, i);
    probe[i] = x[i] - step;
    const double down = evaluate(f, probe, i);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    result.max_relative_error = std::max(result.max_relative_error, err);
  }
  return result;
}

}  // namespace eclab
