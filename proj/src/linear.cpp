#include "csp/linear.hpp"

#include <cmath>

#include "csp/errors.hpp"
#include "csp/ops.hpp"

namespace csp {

LinearLayer LinearLayer::init(std::size_t in, std::size_t out, Rng& rng) {
  if (in == 0 || out == 0) throw ConfigError("linear layer needs nonzero dimensions");
  LinearLayer layer{Matrix(in, out), Matrix(1, out)};
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& v : layer.weight.data()) v = (2.0 * rng.uniform() - 1.0) * limit;
  return layer;
}

Matrix LinearLayer::apply(const Matrix& x) const {
  if (x.cols() != in_dim()) {
    throw ShapeError("linear layer expects width " + std::to_string(in_dim()) + ", got " +
                     std::to_string(x.cols()));
  }
  Matrix out = matmul(x, weight);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t j = 0; j < out.cols(); ++j) out(r, j) += bias[j];
  }
  return out;
}

LinearBinding bind(Tape& tape, const LinearLayer& layer, bool trainable) {
  if (trainable) return {tape.variable(layer.weight), tape.variable(layer.bias)};
  return {tape.constant(layer.weight), tape.constant(layer.bias)};
}

Var forward(Tape& tape, const LinearBinding& layer, Var x) {
  return add_bias(tape, matmul(tape, x, layer.weight), layer.bias);
}

std::vector<Var> bind_all(Tape& tape, const std::vector<Matrix*>& params) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Matrix* p : params) vars.push_back(tape.variable(*p));
  return vars;
}

std::vector<Matrix> gradients(Tape& tape, const std::vector<Var>& vars) {
  std::vector<Matrix> out;
  out.reserve(vars.size());
  for (Var v : vars) out.push_back(tape.grad(v));
  return out;
}

}  // namespace csp
