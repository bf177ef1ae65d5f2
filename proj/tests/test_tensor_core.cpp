#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "csp/adam.hpp"
#include "csp/errors.hpp"
#include "csp/gradcheck.hpp"
#include "csp/ops.hpp"
#include "csp/tape.hpp"
#include "test_support.hpp"

using namespace csp;
using csp::testing::random_matrix;

namespace {

constexpr double kLn2 = std::numbers::ln2;

double gradient_error(const TapeFunction& f, const std::vector<Matrix>& point) {
  const auto r = finite_difference_report(f, point);
  if (r.max_relative_error > 1e-4) {
    ADD_FAILURE() << "input " << r.worst_input << " index " << r.worst_index << " analytic "
                  << r.worst_analytic << " numeric " << r.worst_numeric;
  }
  return r.max_relative_error;
}

}  // namespace

TEST(Matrix, ShapeAndProducts) {
  Matrix a(2, 3, {1, 2, 3, 4, 5, 6});
  Matrix b(3, 2, {1, 0, 0, 1, 1, 1});
  Matrix c = matmul(a, b);
  EXPECT_EQ(c, Matrix(2, 2, {4, 5, 10, 11}));
  EXPECT_EQ(matmul_tn(a, a), matmul(Matrix(3, 2, {1, 4, 2, 5, 3, 6}), a));
  EXPECT_EQ(matmul_nt(a, a), Matrix(2, 2, {14, 32, 32, 77}));
  EXPECT_THROW(matmul(a, a), ShapeError);
  EXPECT_THROW(Matrix(2, 2, {1, 2, 3}), ShapeError);
}

TEST(CosineSimilarity, Examples) {
  const std::vector<double> e0{1, 0}, e1{0, 1}, diag{1, 1};
  EXPECT_DOUBLE_EQ(cosine_similarity(e0, e0), 1.0 / (1.0 + kCosineGuard));
  EXPECT_EQ(cosine_similarity(e0, e1), 0.0);
  EXPECT_NEAR(cosine_similarity(e0, diag), 1.0 / std::sqrt(2.0), 1e-11);
}

TEST(CosineSimilarity, Errors) {
  const std::vector<double> a{1, 0}, b{1, 0, 0}, z{0, 0};
  EXPECT_THROW(cosine_similarity(a, b), ShapeError);
  EXPECT_THROW(cosine_similarity(z, z), NumericError);
  EXPECT_EQ(cosine_similarity(a, z), 0.0);
}

TEST(CosineSimilarity, BoundedOnRandomVectors) {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    Matrix m = random_matrix(2, n, rng, std::exp(rng.normal(0, 3)));
    const double s = cosine_similarity(m.row_span(0), m.row_span(1));
    EXPECT_LE(std::abs(s), 1.0);
  }
}

TEST(LogSigmoid, Examples) {
  EXPECT_NEAR(log_sigmoid(0.0), -kLn2, 1e-15);
  EXPECT_NEAR(log_sigmoid(-100.0), -100.0, 1e-12);
  EXPECT_TRUE(std::isfinite(log_sigmoid(-100.0)));
  const double big = log_sigmoid(100.0);
  EXPECT_LE(big, 0.0);
  EXPECT_GE(big, -1e-40);
  EXPECT_THROW(log_sigmoid(std::nan("")), NumericError);
  EXPECT_THROW(log_sigmoid(INFINITY), NumericError);
}

TEST(LogSigmoid, Identities) {
  Rng rng(5);
  for (int trial = 0; trial < 10000; ++trial) {
    const double x = rng.normal(0.0, trial % 2 ? 3.0 : 30.0);
    const double lhs = log_sigmoid(x) + log_sigmoid(-x);
    // log(s(1-s)) = -|x| - 2 log1p(exp(-|x|))
    const double rhs = -std::abs(x) - 2.0 * std::log1p(std::exp(-std::abs(x)));
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(rhs)));
    EXPECT_LE(log_sigmoid(x), std::min(0.0, x));
  }
}

TEST(LogSoftmax, Examples) {
  EXPECT_NEAR(log_softmax_entry(std::vector<double>{0, 0}, 0, 1.0), -kLn2, 1e-15);
  EXPECT_NEAR(log_softmax_entry(std::vector<double>{10, 0}, 0, 1.0), -std::log1p(std::exp(-10.0)),
              1e-15);
  EXPECT_NEAR(log_softmax_entry(std::vector<double>{10, 0}, 0, 1.0), -4.54e-5, 1e-7);
  EXPECT_NEAR(log_softmax_entry(std::vector<double>{1, 1, 1, 1}, 2, 0.5), -std::log(4.0), 1e-15);
  EXPECT_THROW(log_softmax_entry(std::vector<double>{1, 2}, 0, 0.0), ConfigError);
  EXPECT_THROW(log_softmax_entry(std::vector<double>{1, 2}, 0, -1.0), ConfigError);
}

TEST(LogSoftmax, ExponentialsSumToOne) {
  Rng rng(17);
  for (std::size_t n : {1u, 2u, 7u, 100u, 1000u, 10000u}) {
    std::vector<double> scores(n);
    for (double& s : scores) s = rng.normal(0.0, 20.0);
    const double tau = 0.1 + rng.uniform() * 3.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += std::exp(log_softmax_entry(scores, i, tau));
    EXPECT_NEAR(total, 1.0, 1e-10) << "n=" << n;
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Matrix p(1, 1, 0.5);
  AdamState state(std::vector<Matrix*>{&p});
  adam_step(std::vector<Matrix*>{&p}, std::vector<Matrix>{Matrix(1, 1, 1.0)}, state, 0.001);
  EXPECT_NEAR(p(0, 0) - 0.5, -0.001 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(state.step(), 1u);
}

TEST(Adam, ZeroGradientAndZeroRateAreIdentity) {
  Rng rng(3);
  Matrix p = random_matrix(3, 4, rng);
  const Matrix original = p;
  AdamState state(std::vector<Matrix*>{&p});
  adam_step(std::vector<Matrix*>{&p}, std::vector<Matrix>{Matrix(3, 4)}, state, 0.01);
  EXPECT_EQ(p, original);
  for (int i = 0; i < 5; ++i) {
    adam_step(std::vector<Matrix*>{&p}, std::vector<Matrix>{random_matrix(3, 4, rng)}, state, 0.0);
  }
  EXPECT_EQ(p, original);
  EXPECT_EQ(state.step(), 6u);
}

TEST(Adam, DeterministicAndShapeChecked) {
  auto run = [] {
    Rng rng(9);
    Matrix p = random_matrix(2, 2, rng);
    AdamState state(std::vector<Matrix*>{&p});
    for (int i = 0; i < 20; ++i) {
      adam_step(std::vector<Matrix*>{&p}, std::vector<Matrix>{random_matrix(2, 2, rng)}, state, 0.1);
    }
    return p;
  };
  EXPECT_EQ(run(), run());
  Matrix p(2, 2);
  AdamState state(std::vector<Matrix*>{&p});
  EXPECT_THROW(adam_step(std::vector<Matrix*>{&p}, std::vector<Matrix>{Matrix(2, 3)}, state, 0.1),
               ShapeError);
  EXPECT_EQ(state.first_moments()[0].rows(), 2u);
  EXPECT_EQ(state.second_moments()[0].cols(), 2u);
}

TEST(Tape, RejectsNonFiniteValues) {
  Tape t;
  EXPECT_THROW(t.variable(Matrix(1, 1, std::nan(""))), NumericError);
  Var x = t.variable(Matrix(1, 1, 800.0));
  Var y = t.variable(Matrix(1, 1, 1e308));
  EXPECT_THROW(scale(t, y, 10.0), NumericError);
  EXPECT_NO_THROW(log_sigmoid(t, x));
}

TEST(Tape, GradientOfUnusedInputIsZero) {
  Tape t;
  Var a = t.variable(Matrix(2, 2, 1.0));
  Var b = t.variable(Matrix(2, 2, 3.0));
  Var loss = mean(t, a);
  t.backward(loss);
  EXPECT_EQ(t.grad(a), Matrix(2, 2, 0.25));
  EXPECT_EQ(t.grad(b), Matrix(2, 2, 0.0));
}

TEST(GradientCheck, Square) {
  TapeFunction square = [](Tape& t, std::span<const Var> in) {
    Var y = matmul(t, in[0], in[0]);
    return y;
  };
  const auto report = finite_difference_report(square, {Matrix(1, 1, 3.0)});
  EXPECT_NEAR(report.worst_analytic, 6.0, 1e-12);
  EXPECT_LT(report.max_relative_error, 1e-7);
}

TEST(GradientCheck, DetectsAWrongGradient) {
  TapeFunction broken = [](Tape& t, std::span<const Var> in) {
    const Matrix& x = t.value(in[0]);
    Var in0 = in[0];
    return t.record(Matrix(1, 1, x(0, 0) * x(0, 0)), {in0},
                    [in0](Tape& tape, const Matrix& up) { tape.accumulate(in0, Matrix(1, 1, up(0, 0))); });
  };
  EXPECT_GT(finite_difference_check(broken, {Matrix(1, 1, 3.0)}), 0.5);
}

// Every recorded operation, reduced to a scalar with a random weighting so
// no gradient entry is trivially symmetric.
class OpGradients : public ::testing::Test {
 protected:
  static Var weigh(Tape& t, Var x, const Matrix& w) {
    return mean(t, multiply_constant(t, x, w));
  }
};

TEST_F(OpGradients, AllOpsAtRandomPoints) {
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(4), m = 1 + rng.below(4), k = 1 + rng.below(4);
    const Matrix wnm = random_matrix(n, m, rng), wnk = random_matrix(n, k, rng);
    const double factor = rng.normal();
    const double slope = 0.01 + 0.3 * rng.uniform();
    const Matrix mask = random_matrix(n, m, rng);
    std::vector<std::size_t> picks;
    for (int i = 0; i < 5; ++i) picks.push_back(rng.below(n * m));

    worst = std::max(worst, gradient_error(
        [&](Tape& t, std::span<const Var> in) { return weigh(t, matmul(t, in[0], in[1]), wnk); },
        {random_matrix(n, m, rng), random_matrix(m, k, rng)}));
    worst = std::max(worst, gradient_error(
        [&](Tape& t, std::span<const Var> in) { return weigh(t, add_bias(t, in[0], in[1]), wnm); },
        {random_matrix(n, m, rng), random_matrix(1, m, rng)}));
    worst = std::max(worst, gradient_error(
        [&](Tape& t, std::span<const Var> in) {
          return weigh(t, add(t, scale(t, in[0], factor), in[1]), wnm);
        },
        {random_matrix(n, m, rng), random_matrix(n, m, rng)}));
    worst = std::max(worst, gradient_error(
        [&](Tape& t, std::span<const Var> in) {
          return weigh(t, leaky_relu(t, multiply_constant(t, in[0], mask), slope), wnm);
        },
        {random_matrix(n, m, rng)}));
    worst = std::max(worst, gradient_error(
        [&](Tape& t, std::span<const Var> in) { return weigh(t, log_sigmoid(t, in[0]), wnm); },
        {random_matrix(n, m, rng, 3.0)}));
    worst = std::max(worst, gradient_error(
        [&](Tape& t, std::span<const Var> in) { return mean(t, log_sigmoid(t, gather(t, in[0], picks))); },
        {random_matrix(n, m, rng)}));
    {
      const std::size_t d = 2 + rng.below(4);
      std::vector<RowRef> left, right;
      for (int p = 0; p < 6; ++p) {
        left.push_back({Var{}, rng.below(n)});
        right.push_back({Var{}, rng.below(k)});
      }
      const Similarity kind = trial % 2 ? Similarity::kCosine : Similarity::kDot;
      worst = std::max(worst, gradient_error(
          [&](Tape& t, std::span<const Var> in) {
            auto l = left, r = right;
            for (auto& ref : l) ref.matrix = in[0];
            for (auto& ref : r) ref.matrix = in[1];
            Var s = pair_similarity(t, l, r, kind);
            return mean(t, log_sigmoid(t, scale(t, s, 1.7)));
          },
          {random_matrix(n, d, rng), random_matrix(k, d, rng)}));
    }
    {
      std::vector<std::vector<std::size_t>> groups;
      for (int g = 0; g < 3; ++g) {
        std::vector<std::size_t> group;
        const std::size_t size = 1 + rng.below(4);
        for (std::size_t j = 0; j < size; ++j) group.push_back(rng.below(n * m));
        groups.push_back(group);
      }
      const double tau = 0.2 + rng.uniform();
      worst = std::max(worst, gradient_error(
          [&](Tape& t, std::span<const Var> in) {
            return mean(t, grouped_log_softmax_first(t, in[0], groups, tau));
          },
          {random_matrix(n, m, rng)}));
    }
    {
      std::vector<int> labels;
      for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.below(m)));
      worst = std::max(worst, gradient_error(
          [&](Tape& t, std::span<const Var> in) { return cross_entropy(t, in[0], labels); },
          {random_matrix(n, m, rng, 2.0)}));
    }
    {
      const Matrix target = random_matrix(n, m, rng);
      worst = std::max(worst, gradient_error(
          [&](Tape& t, std::span<const Var> in) { return mean_squared_error(t, in[0], target); },
          {random_matrix(n, m, rng)}));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(4);
  Matrix logits = random_matrix(5, 7, rng, 10.0);
  Matrix shifted = logits;
  for (double& v : shifted.data()) v += 123.0;
  const Matrix p = softmax_rows(logits), q = softmax_rows(shifted);
  for (std::size_t r = 0; r < 5; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      total += p(r, c);
      EXPECT_NEAR(p(r, c), q(r, c), 1e-12);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}
