#include "csp/tape.hpp"

#include <string>

#include "csp/errors.hpp"

namespace csp {

Var Tape::constant(Matrix value) { return record(std::move(value), {}, nullptr); }

Var Tape::variable(Matrix value) {
  Var v = record(std::move(value), {}, nullptr);
  nodes_[v.id].requires_grad = true;
  return v;
}

Var Tape::record(Matrix value, std::vector<Var> inputs, Pullback pullback) {
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced at tape node " + std::to_string(nodes_.size()));
  }
  bool needs = false;
  for (Var in : inputs) needs = needs || node(in).requires_grad;
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.pullback = std::move(pullback);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Tape::Node& Tape::node(Var v) {
  if (v.id >= nodes_.size()) throw UsageError("tape handle does not belong to this tape");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw UsageError("tape handle does not belong to this tape");
  return nodes_[v.id];
}

Matrix& Tape::grad_buffer(Node& n) {
  if (n.grad.size() != n.value.size() || !n.grad.same_shape(n.value)) {
    n.grad = Matrix(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

const Matrix& Tape::grad(Var v) { return grad_buffer(node(v)); }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

void Tape::accumulate(Var v, const Matrix& delta) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (!delta.same_shape(n.value)) throw ShapeError("gradient shape does not match value shape");
  Matrix& g = grad_buffer(n);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

void Tape::accumulate_row(Var v, std::size_t row, std::span<const double> delta) {
  accumulate_row_scaled(v, row, delta, 1.0);
}

void Tape::accumulate_row_scaled(Var v, std::size_t row, std::span<const double> src,
                                 double scale) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (row >= n.value.rows() || src.size() != n.value.cols()) {
    throw ShapeError("row gradient does not fit the value shape");
  }
  auto g = grad_buffer(n).row_span(row);
  for (std::size_t j = 0; j < g.size(); ++j) g[j] += scale * src[j];
}

void Tape::backward(Var output) {
  Node& out = node(output);
  if (out.value.size() != 1) throw ShapeError("backward() needs a scalar (1x1) output");
  for (Node& n : nodes_) {
    if (n.requires_grad) grad_buffer(n).fill(0.0);
  }
  if (!out.requires_grad) return;
  grad_buffer(out)[0] = 1.0;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.pullback) continue;
    // The pullback may touch other nodes' gradients but never this one, so
    // a copy of the upstream is not needed.
    n.pullback(*this, n.grad);
  }
  for (const Node& n : nodes_) {
    if (n.requires_grad && !n.grad.all_finite()) {
      throw NumericError("non-finite gradient after backward pass");
    }
  }
}

void Tape::clear() { nodes_.clear(); }

}  // namespace csp
