#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "cycleground/errors.hpp"
#include "cycleground/model/checkpoint.hpp"
#include "cycleground/numcore/gradcheck.hpp"
#include "cycleground/numcore/graph.hpp"
#include "cycleground/numcore/rng.hpp"

namespace nc = cycleground::numcore;
using nc::Matrix;

namespace {

Matrix random_matrix(nc::Rng& rng, nc::Index rows, nc::Index cols) {
  Matrix m(rows, cols);
  for (nc::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Checks one op's gradient against central differences through a scalar
// reduction with fixed random weights.
void expect_op_gradient(const std::function<nc::Var(nc::Graph&, nc::Var, nc::Var)>& op, nc::Index rows,
                        nc::Index cols, nc::Index rows_b, nc::Index cols_b) {
  nc::Rng rng(7);
  nc::ParameterSet params;
  params.add("a", random_matrix(rng, rows, cols));
  params.add("b", random_matrix(rng, rows_b, cols_b));
  std::optional<Matrix> weights;
  auto objective = [&](nc::Graph& g, const nc::ParameterSet& p) {
    nc::Var out = op(g, g.param("a", p.at("a")), g.param("b", p.at("b")));
    if (!weights) {
      nc::Rng wr(11);
      weights = random_matrix(wr, out.value().rows(), out.value().cols());
    }
    return nc::sum(nc::mul(out, g.constant(*weights)));
  };
  const auto report = nc::grad_check(objective, params, 1e-5);
  EXPECT_LT(report.max_rel_error, 1e-6);
}

}  // namespace

TEST(Rng, SameSeedSameStream) {
  nc::Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, SplitIsIndependentOfParentPosition) {
  nc::Rng a(3);
  const auto child_before = a.split(5).next_u64();
  a.next_u64();
  a.next_u64();
  EXPECT_EQ(a.split(5).next_u64(), child_before);
  EXPECT_NE(a.split(6).next_u64(), child_before);
}

TEST(Rng, UniformAndBelowStayInRange) {
  nc::Rng r(1);
  double mean = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    mean += u / 10000.0;
    ASSERT_LT(r.below(7), 7u);
  }
  EXPECT_NEAR(mean, 0.5, 0.02);
}

TEST(Rng, NormalMoments) {
  nc::Rng r(9);
  double s = 0.0, s2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.03);
  EXPECT_NEAR(s2 / n, 1.0, 0.05);
}

TEST(Rng, ShuffleIsAPermutation) {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  nc::Rng r(2);
  r.shuffle(std::span<int>(v));
  std::set<int> seen(v.begin(), v.end());
  EXPECT_EQ(seen.size(), 50u);
}

TEST(Graph, MatmulValueAndShapeCheck) {
  nc::Graph g;
  auto a = g.constant(nc::from_rows({{1, 2}, {3, 4}}));
  auto b = g.constant(nc::from_rows({{5}, {6}}));
  EXPECT_EQ(nc::matmul(a, b).value(), nc::from_rows({{17}, {39}}));
  EXPECT_THROW(nc::matmul(b, b), cycleground::DimensionError);
}

TEST(Graph, SoftmaxRowsSumToOne) {
  nc::Graph g;
  auto z = g.constant(nc::from_rows({{1000, 1001, 999}, {-5, 0, 5}}));
  const Matrix p = nc::softmax(z).value();
  for (nc::Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
  EXPECT_THROW(nc::softmax(g.constant(nc::row_vector({1.0, NAN}))), cycleground::NumericError);
}

TEST(Graph, CrossEntropyOfUniformLogitsIsLogV) {
  nc::Graph g;
  auto logits = g.constant(Matrix::Zero(1, 10));
  EXPECT_NEAR(nc::cross_entropy(logits, 3).scalar(), std::log(10.0), 1e-12);
}

TEST(Graph, KlOfPointMassAgainstUniformIsLog2) {
  nc::Graph g;
  const double w[] = {1.0};
  auto kl = nc::kl_divergence(nc::row_vector({1.0, 0.0}), g.constant(nc::row_vector({0.3, 0.3})), w);
  EXPECT_NEAR(kl.scalar(), std::log(2.0), 1e-12);
}

TEST(Graph, KlIsZeroOnlyForEqualDistributions) {
  nc::Graph g;
  const double w[] = {1.0};
  const Matrix logits = nc::row_vector({0.2, -1.0, 0.7});
  const Matrix p = (logits.array() - logits.maxCoeff()).exp().matrix();
  const Matrix target = p / p.sum();
  EXPECT_NEAR(nc::kl_divergence(target, g.constant(logits), w).scalar(), 0.0, 1e-12);
  const Matrix other = nc::row_vector({0.2, 0.3, 0.5});
  EXPECT_GT(nc::kl_divergence(other, g.constant(logits), w).scalar(), 1e-6);
  EXPECT_THROW(nc::kl_divergence(nc::row_vector({0.5, 0.6, 0.0}), g.constant(logits), w),
               cycleground::UsageError);
}

TEST(Graph, KlIsNonNegative) {
  nc::Rng rng(4);
  nc::Graph g;
  const double w[] = {1.0};
  for (int i = 0; i < 200; ++i) {
    Matrix t = random_matrix(rng, 1, 5).array().exp().matrix();
    t /= t.sum();
    EXPECT_GE(nc::kl_divergence(t, g.constant(random_matrix(rng, 1, 5)), w).scalar(), -1e-15);
  }
}

TEST(Graph, BindingANameTwiceSharesOneLeaf) {
  nc::Graph g;
  auto a = g.param("w", nc::row_vector({1.0, 2.0}));
  auto b = g.param("w", nc::row_vector({9.0, 9.0}));
  EXPECT_EQ(a.id(), b.id());
  auto loss = nc::sum(nc::add(nc::scale(a, 2.0), nc::scale(b, 3.0)));
  g.backward(loss);
  EXPECT_EQ(a.grad(), nc::row_vector({5.0, 5.0}));
}

TEST(Graph, ConstantsReceiveNoGradient) {
  nc::Graph g;
  auto c = g.constant(nc::row_vector({1.0}));
  auto v = g.variable(nc::row_vector({2.0}));
  g.backward(nc::sum(nc::mul(c, v)));
  EXPECT_EQ(c.grad().size(), 0);
  EXPECT_DOUBLE_EQ(v.grad()(0, 0), 1.0);
}

TEST(Graph, BackwardNeedsScalarRoot) {
  nc::Graph g;
  auto v = g.variable(nc::row_vector({1.0, 2.0}));
  EXPECT_THROW(g.backward(v), cycleground::UsageError);
}

TEST(OpGradients, MatMul) {
  expect_op_gradient([](nc::Graph&, nc::Var a, nc::Var b) { return nc::matmul(a, b); }, 3, 4, 4, 2);
}

TEST(OpGradients, ElementwiseBinary) {
  expect_op_gradient([](nc::Graph&, nc::Var a, nc::Var b) { return nc::mul(nc::add(a, b), nc::sub(a, b)); },
                     3, 4, 3, 4);
}

TEST(OpGradients, AddRowBroadcast) {
  expect_op_gradient([](nc::Graph&, nc::Var a, nc::Var b) { return nc::add_row(a, b); }, 3, 4, 1, 4);
}

TEST(OpGradients, Nonlinearities) {
  expect_op_gradient(
      [](nc::Graph&, nc::Var a, nc::Var b) {
        return nc::add(nc::tanh(a), nc::mul(nc::sigmoid(b), nc::scale(a, 0.5)));
      },
      2, 5, 2, 5);
}

TEST(OpGradients, LogOfPositive) {
  expect_op_gradient(
      [](nc::Graph&, nc::Var a, nc::Var b) { return nc::log(nc::add(nc::sigmoid(a), nc::sigmoid(b))); }, 2, 3,
      2, 3);
}

TEST(OpGradients, ConcatAndSlice) {
  expect_op_gradient(
      [](nc::Graph&, nc::Var a, nc::Var b) { return nc::slice_cols(nc::concat({a, b, a}), 2, 5); }, 2, 3, 2, 2);
}

TEST(OpGradients, SoftmaxAndCrossEntropy) {
  expect_op_gradient(
      [](nc::Graph&, nc::Var a, nc::Var b) {
        const int targets[] = {0, 3, 1};
        const double w[] = {0.5, 0.0, 1.5};
        return nc::concat({nc::cross_entropy(a, targets, w), nc::reshape(nc::softmax(b), 1, 12)});
      },
      3, 4, 3, 4);
}

TEST(OpGradients, KlDivergenceLogits) {
  expect_op_gradient(
      [](nc::Graph&, nc::Var a, nc::Var b) {
        const double w[] = {0.7, 1.3};
        const Matrix target = nc::from_rows({{0.2, 0.0, 0.8}, {0.1, 0.6, 0.3}});
        return nc::add(nc::kl_divergence(target, a, w), nc::sum(b));
      },
      2, 3, 1, 1);
}

TEST(OpGradients, GatherRepeatReshape) {
  expect_op_gradient(
      [](nc::Graph&, nc::Var a, nc::Var b) {
        const int ids[] = {2, 0, 2, 1};
        return nc::add(nc::reshape(nc::repeat_rows(nc::gather_rows(a, ids), 2), 4, 6), nc::repeat_rows(b, 4));
      },
      3, 3, 1, 6);
}

TEST(OpGradients, RegionDotAndPool) {
  expect_op_gradient(
      [](nc::Graph&, nc::Var a, nc::Var b) {
        nc::Var scores = nc::region_dot(a, b);
        return nc::region_pool(nc::softmax(scores), b);
      },
      2, 3, 8, 3);
}

TEST(OpGradients, LstmCell) {
  expect_op_gradient(
      [](nc::Graph& g, nc::Var a, nc::Var b) {
        nc::Rng r(5);
        nc::Var x = g.constant(random_matrix(r, 2, 3));
        nc::LstmWeights w{a, b};
        auto s = nc::lstm_cell(x, g.constant(random_matrix(r, 2, 2)), g.constant(random_matrix(r, 2, 2)), w);
        return nc::concat({s.h, s.c});
      },
      5, 8, 1, 8);
}

TEST(GradCheck, CorruptedTanhDerivativeIsCaught) {
  nc::Rng rng(1);
  nc::ParameterSet params;
  params.add("a", random_matrix(rng, 2, 3));
  auto objective = [](nc::Graph& g, const nc::ParameterSet& p) { return nc::sum(nc::tanh(g.param("a", p.at("a")))); };
  EXPECT_LT(nc::grad_check(objective, params, 1e-5).max_rel_error, 1e-6);
  nc::GraphOptions bad;
  bad.corrupt_tanh_grad = true;
  EXPECT_GT(nc::grad_check(objective, params, 1e-5, bad).max_rel_error, 1e-2);
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_DOUBLE_EQ(nc::relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(nc::relative_error(1.0, 3.0), 0.5);
}

TEST(ParameterSet, IdenticalIsBitwise) {
  nc::ParameterSet a;
  a.add("x", nc::row_vector({0.1, 0.2}));
  nc::ParameterSet b = a;
  EXPECT_TRUE(a.identical(b));
  b.at("x")(0, 1) = std::nextafter(0.2, 1.0);
  EXPECT_FALSE(a.identical(b));
  EXPECT_THROW(a.add("x", nc::row_vector({1.0})), cycleground::UsageError);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  cycleground::model::ModelDims dims;
  dims.vocab = 11;
  dims.embed = 5;
  dims.hidden = 4;
  dims.feature = 6;
  dims.classes = 3;
  dims.location = 2;
  const auto params = cycleground::model::init_params(dims, cycleground::model::LocalizerVariant::Mlp, 3);
  std::stringstream buf;
  cycleground::model::write_checkpoint(buf, params);
  const auto back = cycleground::model::read_checkpoint(buf);
  EXPECT_TRUE(back.values.identical(params.values));
  EXPECT_EQ(back.dims, dims);
  EXPECT_EQ(back.localizer, params.localizer);
}

TEST(Checkpoint, RejectsBadMagicVersionAndTruncation) {
  cycleground::model::ModelDims dims;
  dims.vocab = 7;
  const auto params = cycleground::model::init_params(dims, cycleground::model::LocalizerVariant::Linear, 0);
  std::stringstream buf;
  cycleground::model::write_checkpoint(buf, params);
  const std::string bytes = buf.str();

  std::string wrong_version = bytes;
  wrong_version[8] = 99;
  std::stringstream v(wrong_version);
  EXPECT_THROW(cycleground::model::read_checkpoint(v), cycleground::VersionError);

  std::stringstream t(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(cycleground::model::read_checkpoint(t), cycleground::ParseError);

  std::stringstream m("garbage!" + bytes.substr(8));
  EXPECT_THROW(cycleground::model::read_checkpoint(m), cycleground::ParseError);
}
