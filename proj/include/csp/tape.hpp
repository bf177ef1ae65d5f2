#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "csp/matrix.hpp"

namespace csp {

class Tape;

/// Handle to a value recorded on a Tape. Only meaningful for the tape that
/// produced it, and only until that tape is cleared.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

/// Reverse-mode differentiation record over matrix-valued nodes.
///
/// Nodes are appended in evaluation order; backward() walks them in reverse
/// and calls each node's pullback with the accumulated upstream gradient.
/// Every recorded value is checked for NaN/Inf.
class Tape {
 public:
  /// Pullback: given the gradient w.r.t. this node's value, accumulate into
  /// the inputs via Tape::accumulate.
  using Pullback = std::function<void(Tape&, const Matrix& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives no gradient.
  Var constant(Matrix value);
  /// Leaf whose gradient is collected by backward().
  Var variable(Matrix value);

  Var record(Matrix value, std::vector<Var> inputs, Pullback pullback);

  const Matrix& value(Var v) const;
  /// Gradient of the last backward() output w.r.t. v; zeros if v did not
  /// influence it.
  const Matrix& grad(Var v);
  bool requires_grad(Var v) const;

  /// Seeds d(output)/d(output) = 1; output must be 1x1.
  void backward(Var output);

  void accumulate(Var v, const Matrix& delta);
  /// Adds delta into row `row` of v's gradient. delta.size() == cols.
  void accumulate_row(Var v, std::size_t row, std::span<const double> delta);
  /// Adds scale * src into row `row` of v's gradient.
  void accumulate_row_scaled(Var v, std::size_t row, std::span<const double> src, double scale);

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Pullback pullback;
  };

  Node& node(Var v);
  const Node& node(Var v) const;
  Matrix& grad_buffer(Node& n);

  std::vector<Node> nodes_;
};

}  // namespace csp
