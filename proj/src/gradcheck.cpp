#include "csp/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace csp {

namespace {

Var build(Tape& tape, const TapeFunction& f, const std::vector<Matrix>& point) {
  std::vector<Var> inputs;
  inputs.reserve(point.size());
  for (const Matrix& m : point) inputs.push_back(tape.variable(m));
  return f(tape, inputs);
}

}  // namespace

double evaluate(const TapeFunction& f, const std::vector<Matrix>& point) {
  Tape tape;
  return tape.value(build(tape, f, point))[0];
}

std::vector<Matrix> tape_gradient(const TapeFunction& f, const std::vector<Matrix>& point) {
  Tape tape;
  std::vector<Var> inputs;
  for (const Matrix& m : point) inputs.push_back(tape.variable(m));
  Var out = f(tape, inputs);
  tape.backward(out);
  std::vector<Matrix> grads;
  for (Var v : inputs) grads.push_back(tape.grad(v));
  return grads;
}

GradientCheckReport finite_difference_report(const TapeFunction& f,
                                             const std::vector<Matrix>& point, double eps) {
  const std::vector<Matrix> analytic = tape_gradient(f, point);
  GradientCheckReport report;
  std::vector<Matrix> probe = point;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    for (std::size_t j = 0; j < probe[i].size(); ++j) {
      const double saved = probe[i][j];
      probe[i][j] = saved + eps;
      const double up = evaluate(f, probe);
      probe[i][j] = saved - eps;
      const double down = evaluate(f, probe);
      probe[i][j] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[i][j];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      if (err > report.max_relative_error) {
        report = {err, i, j, a, numeric};
      }
    }
  }
  return report;
}

double finite_difference_check(const TapeFunction& f, const std::vector<Matrix>& point,
                               double eps) {
  return finite_difference_report(f, point, eps).max_relative_error;
}

}  // namespace csp
