#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "csp/matrix.hpp"

namespace csp {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for a fixed list of parameters.
class AdamState {
 public:
  AdamState() = default;
  AdamState(std::span<Matrix* const> params, AdamConfig config = {});

  std::uint64_t step() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

 private:
  friend void adam_step(std::span<Matrix* const>, std::span<const Matrix>, AdamState&, double);

  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::uint64_t step_ = 0;
};

/// One bias-corrected Adam update, in place. Throws ShapeError when the
/// parameter, gradient and moment shapes disagree.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state,
               double lr);

}  // namespace csp
