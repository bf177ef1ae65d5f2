#include "csp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "csp/errors.hpp"

namespace csp {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine_similarity: lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()) + " differ");
  }
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 && nb == 0.0) throw NumericError("cosine_similarity: both vectors are zero");
  return dot(a, b) / (na * nb + kCosineGuard);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  if (!std::isfinite(x)) throw NumericError("log_sigmoid: non-finite input");
  // -softplus(-x) = -(max(-x, 0) + log1p(exp(-|x|)))
  return -(std::max(-x, 0.0) + std::log1p(std::exp(-std::abs(x))));
}

double log_softmax_entry(std::span<const double> scores, std::size_t index, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("log_softmax_entry: temperature must be > 0");
  if (index >= scores.size()) throw ShapeError("log_softmax_entry: index out of range");
  double top = -INFINITY;
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericError("log_softmax_entry: non-finite score");
    top = std::max(top, s / temperature);
  }
  double total = 0.0;
  for (double s : scores) total += std::exp(s / temperature - top);
  return scores[index] / temperature - top - std::log(total);
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row_span(r);
    auto o = out.row_span(r);
    const double top = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - top);
      total += o[j];
    }
    for (double& v : o) v /= total;
  }
  return out;
}

// ---------------------------------------------------------------------------

Var matmul(Tape& t, Var a, Var b) {
  Matrix out = matmul(t.value(a), t.value(b));
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& up) {
    if (tp.requires_grad(a)) tp.accumulate(a, matmul_nt(up, tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, matmul_tn(tp.value(a), up));
  });
}

Var add_bias(Tape& t, Var x, Var bias) {
  const Matrix& xv = t.value(x);
  const Matrix& bv = t.value(bias);
  if (bv.rows() != 1 || bv.cols() != xv.cols()) throw ShapeError("add_bias: bias must be 1 x cols");
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row_span(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bv[j];
  }
  return t.record(std::move(out), {x, bias}, [x, bias](Tape& tp, const Matrix& up) {
    tp.accumulate(x, up);
    if (tp.requires_grad(bias)) {
      Matrix db(1, up.cols());
      for (std::size_t r = 0; r < up.rows(); ++r) {
        for (std::size_t j = 0; j < up.cols(); ++j) db[j] += up(r, j);
      }
      tp.accumulate(bias, db);
    }
  });
}

Var add(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  if (!av.same_shape(bv)) throw ShapeError("add: shape mismatch");
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& up) {
    tp.accumulate(a, up);
    tp.accumulate(b, up);
  });
}

Var scale(Tape& t, Var a, double factor) {
  Matrix out = t.value(a);
  for (double& v : out.data()) v *= factor;
  return t.record(std::move(out), {a}, [a, factor](Tape& tp, const Matrix& up) {
    Matrix g = up;
    for (double& v : g.data()) v *= factor;
    tp.accumulate(a, g);
  });
}

Var leaky_relu(Tape& t, Var x, double slope) {
  Matrix out = t.value(x);
  for (double& v : out.data()) v = v > 0.0 ? v : slope * v;
  return t.record(std::move(out), {x}, [x, slope](Tape& tp, const Matrix& up) {
    const Matrix& in = tp.value(x);
    Matrix g = up;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!(in[i] > 0.0)) g[i] *= slope;
    }
    tp.accumulate(x, g);
  });
}

Var multiply_constant(Tape& t, Var x, const Matrix& factor) {
  const Matrix& xv = t.value(x);
  if (!xv.same_shape(factor)) throw ShapeError("multiply_constant: shape mismatch");
  Matrix out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
  return t.record(std::move(out), {x}, [x, factor](Tape& tp, const Matrix& up) {
    Matrix g = up;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= factor[i];
    tp.accumulate(x, g);
  });
}

Var log_sigmoid(Tape& t, Var x) {
  Matrix out = t.value(x);
  for (double& v : out.data()) v = log_sigmoid(v);
  return t.record(std::move(out), {x}, [x](Tape& tp, const Matrix& up) {
    const Matrix& in = tp.value(x);
    Matrix g = up;
    // d/dx log sigmoid(x) = sigmoid(-x)
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= sigmoid(-in[i]);
    tp.accumulate(x, g);
  });
}

Var mean(Tape& t, Var x) {
  const Matrix& xv = t.value(x);
  if (xv.empty()) throw ShapeError("mean: empty input");
  double total = 0.0;
  for (double v : xv.data()) total += v;
  const double n = static_cast<double>(xv.size());
  return t.record(Matrix(1, 1, total / n), {x}, [x, n](Tape& tp, const Matrix& up) {
    const Matrix& in = tp.value(x);
    tp.accumulate(x, Matrix(in.rows(), in.cols(), up[0] / n));
  });
}

Var gather(Tape& t, Var x, std::span<const std::size_t> indices) {
  const Matrix& xv = t.value(x);
  Matrix out(indices.size(), 1);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= xv.size()) throw ShapeError("gather: index out of range");
    out[i] = xv[indices[i]];
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return t.record(std::move(out), {x}, [x, idx = std::move(idx)](Tape& tp, const Matrix& up) {
    const Matrix& in = tp.value(x);
    Matrix g(in.rows(), in.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += up[i];
    tp.accumulate(x, g);
  });
}

Var pair_similarity(Tape& t, std::span<const RowRef> left, std::span<const RowRef> right,
                    Similarity kind) {
  if (left.size() != right.size()) throw ShapeError("pair_similarity: side lengths differ");
  const std::size_t count = left.size();
  Matrix out(count, 1);
  // Per pair: dot, |a|, |b|; reused by the pullback.
  std::vector<double> dots(count), norm_l(count), norm_r(count);
  std::vector<Var> inputs;
  for (std::size_t p = 0; p < count; ++p) {
    const auto a = t.value(left[p].matrix).row_span(left[p].row);
    const auto b = t.value(right[p].matrix).row_span(right[p].row);
    if (a.size() != b.size()) throw ShapeError("pair_similarity: embedding widths differ");
    dots[p] = dot(a, b);
    if (kind == Similarity::kCosine) {
      norm_l[p] = norm(a);
      norm_r[p] = norm(b);
      out[p] = dots[p] / (norm_l[p] * norm_r[p] + kCosineGuard);
    } else {
      out[p] = dots[p];
    }
  }
  for (const auto* side : {&left, &right}) {
    for (const RowRef& r : *side) {
      if (std::find_if(inputs.begin(), inputs.end(),
                       [&](Var v) { return v.id == r.matrix.id; }) == inputs.end()) {
        inputs.push_back(r.matrix);
      }
    }
  }
  std::vector<RowRef> ls(left.begin(), left.end()), rs(right.begin(), right.end());
  return t.record(
      std::move(out), std::move(inputs),
      [ls = std::move(ls), rs = std::move(rs), dots = std::move(dots), norm_l = std::move(norm_l),
       norm_r = std::move(norm_r), kind](Tape& tp, const Matrix& up) {
        for (std::size_t p = 0; p < ls.size(); ++p) {
          const double u = up[p];
          if (u == 0.0) continue;
          const auto a = tp.value(ls[p].matrix).row_span(ls[p].row);
          const auto b = tp.value(rs[p].matrix).row_span(rs[p].row);
          if (kind == Similarity::kDot) {
            tp.accumulate_row_scaled(ls[p].matrix, ls[p].row, b, u);
            tp.accumulate_row_scaled(rs[p].matrix, rs[p].row, a, u);
            continue;
          }
          // s = p / D with D = |a||b| + eps:
          // ds/da = b / D - p |b| a / (|a| D^2)
          const double den = norm_l[p] * norm_r[p] + kCosineGuard;
          const double ratio = dots[p] / (den * den);
          tp.accumulate_row_scaled(ls[p].matrix, ls[p].row, b, u / den);
          tp.accumulate_row_scaled(rs[p].matrix, rs[p].row, a, u / den);
          if (norm_l[p] > 0.0) {
            tp.accumulate_row_scaled(ls[p].matrix, ls[p].row, a,
                                     -u * ratio * norm_r[p] / norm_l[p]);
          }
          if (norm_r[p] > 0.0) {
            tp.accumulate_row_scaled(rs[p].matrix, rs[p].row, b,
                                     -u * ratio * norm_l[p] / norm_r[p]);
          }
        }
      });
}

Var grouped_log_softmax_first(Tape& t, Var scores,
                              const std::vector<std::vector<std::size_t>>& groups,
                              double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  const Matrix& sv = t.value(scores);
  Matrix out(groups.size(), 1);
  // Softmax weights per group member, kept for the pullback.
  std::vector<std::vector<double>> probs(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& members = groups[g];
    if (members.empty()) throw ShapeError("grouped_log_softmax_first: empty group");
    double top = -INFINITY;
    for (std::size_t m : members) {
      if (m >= sv.size()) throw ShapeError("grouped_log_softmax_first: index out of range");
      top = std::max(top, sv[m] / temperature);
    }
    double total = 0.0;
    auto& pr = probs[g];
    pr.resize(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) {
      pr[k] = std::exp(sv[members[k]] / temperature - top);
      total += pr[k];
    }
    for (double& p : pr) p /= total;
    out[g] = sv[members[0]] / temperature - top - std::log(total);
  }
  return t.record(std::move(out), {scores},
                  [scores, groups, probs = std::move(probs), temperature](Tape& tp,
                                                                          const Matrix& up) {
                    const Matrix& in = tp.value(scores);
                    Matrix g(in.rows(), in.cols());
                    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
                      const auto& members = groups[gi];
                      const double u = up[gi] / temperature;
                      for (std::size_t k = 0; k < members.size(); ++k) {
                        g[members[k]] += u * ((k == 0 ? 1.0 : 0.0) - probs[gi][k]);
                      }
                    }
                    tp.accumulate(scores, g);
                  });
}

Var cross_entropy(Tape& t, Var logits, std::span<const int> labels) {
  const Matrix& lv = t.value(logits);
  if (lv.rows() != labels.size()) throw ShapeError("cross_entropy: label count != rows");
  if (lv.rows() == 0) throw ShapeError("cross_entropy: empty batch");
  Matrix probs = softmax_rows(lv);
  double total = 0.0;
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= lv.cols()) {
      throw ShapeError("cross_entropy: label out of range");
    }
    total -= log_softmax_entry(lv.row_span(r), static_cast<std::size_t>(y), 1.0);
  }
  const double n = static_cast<double>(lv.rows());
  std::vector<int> ys(labels.begin(), labels.end());
  return t.record(Matrix(1, 1, total / n), {logits},
                  [logits, probs = std::move(probs), ys = std::move(ys), n](Tape& tp,
                                                                             const Matrix& up) {
                    Matrix g = probs;
                    for (std::size_t r = 0; r < g.rows(); ++r) g(r, ys[r]) -= 1.0;
                    for (double& v : g.data()) v *= up[0] / n;
                    tp.accumulate(logits, g);
                  });
}

Var mean_squared_error(Tape& t, Var pred, const Matrix& target) {
  const Matrix& pv = t.value(pred);
  if (!pv.same_shape(target)) throw ShapeError("mean_squared_error: shape mismatch");
  if (pv.empty()) throw ShapeError("mean_squared_error: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double diff = pv[i] - target[i];
    total += diff * diff;
  }
  const double n = static_cast<double>(pv.size());
  return t.record(Matrix(1, 1, total / n), {pred}, [pred, target, n](Tape& tp, const Matrix& up) {
    const Matrix& in = tp.value(pred);
    Matrix g(in.rows(), in.cols());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * (in[i] - target[i]) * up[0] / n;
    tp.accumulate(pred, g);
  });
}

}  // namespace csp
