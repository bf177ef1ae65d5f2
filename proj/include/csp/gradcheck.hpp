#pragma once

#include <functional>
#include <span>
#include <vector>

#include "csp/matrix.hpp"
#include "csp/tape.hpp"

namespace csp {

/// A scalar function of several matrix inputs, written against the tape.
/// It must be deterministic: any randomness has to be replayed from a copied
/// Rng on every call.
using TapeFunction = std::function<Var(Tape&, std::span<const Var>)>;

double evaluate(const TapeFunction& f, const std::vector<Matrix>& point);
std::vector<Matrix> tape_gradient(const TapeFunction& f, const std::vector<Matrix>& point);

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares tape gradients with central differences (f(x+e) - f(x-e)) / 2e
/// coordinate by coordinate. Relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-8).
GradientCheckReport finite_difference_report(const TapeFunction& f,
                                             const std::vector<Matrix>& point, double eps = 1e-5);

double finite_difference_check(const TapeFunction& f, const std::vector<Matrix>& point,
                               double eps = 1e-5);

}  // namespace csp
