#pragma once

#include <cstddef>
#include <vector>

#include "csp/matrix.hpp"
#include "csp/rng.hpp"
#include "csp/tape.hpp"

namespace csp {

/// y = x W + b, with W (in x out) and b (1 x out).
struct LinearLayer {
  Matrix weight;
  Matrix bias;

  /// Glorot-uniform weight, zero bias.
  static LinearLayer init(std::size_t in, std::size_t out, Rng& rng);

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
  std::vector<Matrix*> parameters() { return {&weight, &bias}; }
  Matrix apply(const Matrix& x) const;

  friend bool operator==(const LinearLayer&, const LinearLayer&) = default;
};

struct LinearBinding {
  Var weight;
  Var bias;
};

LinearBinding bind(Tape& tape, const LinearLayer& layer, bool trainable = true);
Var forward(Tape& tape, const LinearBinding& layer, Var x);

/// Image projection W(): frozen feature (d_I) -> embedding space (d).
using ProjectionParams = LinearLayer;
/// Classification head g(): frozen feature (d_I) -> Q logits.
using ClassifierHead = LinearLayer;

/// Records a list of parameter matrices as trainable variables.
std::vector<Var> bind_all(Tape& tape, const std::vector<Matrix*>& params);
std::vector<Matrix> gradients(Tape& tape, const std::vector<Var>& vars);

}  // namespace csp
