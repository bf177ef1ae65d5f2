#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "csp/matrix.hpp"
#include "csp/tape.hpp"

namespace csp {

/// Denominator guard of the cosine similarity. Fixed, not tunable.
inline constexpr double kCosineGuard = 1e-12;

// ---------------------------------------------------------------------------
// Scalar reference functions (no tape).

/// a.b / (|a||b| + 1e-12). Throws ShapeError on length mismatch and
/// NumericError when both vectors are zero.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// log(sigmoid(x)) computed as -softplus(-x). log(1 - sigmoid(x)) is
/// log_sigmoid(-x).
double log_sigmoid(double x);

/// scores[index]/t - logsumexp(scores/t), max-shifted. Throws ConfigError
/// when temperature <= 0.
double log_softmax_entry(std::span<const double> scores, std::size_t index, double temperature);

/// Row-wise softmax.
Matrix softmax_rows(const Matrix& logits);

double sigmoid(double x);

// ---------------------------------------------------------------------------
// Recorded operations.

Var matmul(Tape& t, Var a, Var b);
/// x (n x m) + bias (1 x m) broadcast over rows.
Var add_bias(Tape& t, Var x, Var bias);
Var add(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double factor);
Var leaky_relu(Tape& t, Var x, double slope);
/// Elementwise product with a constant (dropout masks).
Var multiply_constant(Tape& t, Var x, const Matrix& factor);
Var log_sigmoid(Tape& t, Var x);
/// Mean of all entries, 1x1. Empty input is an error.
Var mean(Tape& t, Var x);
/// Column vector of the selected entries (flat indices).
Var gather(Tape& t, Var x, std::span<const std::size_t> indices);

/// A reference to one row of a recorded matrix.
struct RowRef {
  Var matrix;
  std::size_t row = 0;
};

enum class Similarity { kCosine, kDot };

/// Column vector (P x 1) of similarities s(left_p, right_p).
Var pair_similarity(Tape& t, std::span<const RowRef> left, std::span<const RowRef> right,
                    Similarity kind);

/// For each group g of flat indices into `scores`, the log-softmax of the
/// group's first member over the whole group at temperature t. Result is
/// G x 1.
Var grouped_log_softmax_first(Tape& t, Var scores,
                              const std::vector<std::vector<std::size_t>>& groups,
                              double temperature);

/// Mean softmax cross-entropy of row-wise logits against integer labels.
Var cross_entropy(Tape& t, Var logits, std::span<const int> labels);

/// Mean over all entries of (pred - target)^2; target receives no gradient.
Var mean_squared_error(Tape& t, Var pred, const Matrix& target);

}  // namespace csp
