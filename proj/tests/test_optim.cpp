#include "copulaflow/errors.hpp"
#include "copulaflow/marginal.hpp"
#include "copulaflow/optim.hpp"
#include "copulaflow/random.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

using namespace copulaflow;

namespace {

//! Sum of squares of the parameters, independent of the rows.
class SumOfSquares : public Objective
{
public:
  Eigen::Index rows() const override { return 1; }
  double value_and_grad(const Eigen::VectorXd& p,
                        RowIndices,
                        Eigen::VectorXd& grad) const override
  {
    grad = 2.0 * p;
    return p.squaredNorm();
  }
};

//! 0.5 * sum_i a_i (p_i - c_i)^2.
class Bowl : public Objective
{
public:
  Bowl(Eigen::VectorXd a, Eigen::VectorXd c)
    : a_(std::move(a))
    , c_(std::move(c))
  {}
  Eigen::Index rows() const override { return 1; }
  double value_and_grad(const Eigen::VectorXd& p,
                        RowIndices,
                        Eigen::VectorXd& grad) const override
  {
    const Eigen::ArrayXd d = p - c_;
    grad = (a_.array() * d).matrix();
    return 0.5 * (a_.array() * d.square()).sum();
  }

private:
  Eigen::VectorXd a_, c_;
};

//! log(p_0): NaN once p_0 < 0.
class LogFirst : public Objective
{
public:
  Eigen::Index rows() const override { return 1; }
  double value_and_grad(const Eigen::VectorXd& p,
                        RowIndices,
                        Eigen::VectorXd& grad) const override
  {
    grad = Eigen::VectorXd::Zero(p.size());
    grad(0) = 1.0 / p(0);
    return std::log(p(0));
  }
};

} // namespace

TEST(ValueAndGrad, Quadratic)
{
  const SumOfSquares f;
  const auto rows = all_rows(1);
  const auto r = value_and_grad(f, Eigen::Vector2d(1.0, -2.0), rows);
  EXPECT_DOUBLE_EQ(r.value, 5.0);
  ASSERT_EQ(r.grad.size(), 2);
  EXPECT_DOUBLE_EQ(r.grad(0), 2.0);
  EXPECT_DOUBLE_EQ(r.grad(1), -4.0);
}

TEST(ValueAndGrad, NonFiniteLossCarriesBatchIndex)
{
  const LogFirst f;
  const auto rows = all_rows(1);
  try {
    value_and_grad(f, Eigen::Vector2d(-1.0, 0.0), rows, 7);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.batch_index(), 7);
  }
}

TEST(ValueAndGrad, MarginalNllMatchesFiniteDifferences)
{
  Rng rng(11);
  Eigen::VectorXd x(64);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x(i) = rng.normal();
  const double lo = x.minCoeff() - 0.5, hi = x.maxCoeff() + 0.5;
  const MarginalNll nll(x, lo, hi);
  const Eigen::Index k = 8;
  Eigen::VectorXd p(3 * k + 1);
  for (Eigen::Index i = 0; i < p.size(); ++i)
    p(i) = 0.8 * rng.normal();
  const auto rows = all_rows(x.size());

  Eigen::VectorXd grad;
  nll.value_and_grad(p, rows, grad);
  ASSERT_EQ(grad.size(), p.size());
  const double h = 1e-5;
  Eigen::VectorXd fd(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    Eigen::VectorXd a = p, b = p;
    a(i) += h;
    b(i) -= h;
    fd(i) = (nll.value(a, rows) - nll.value(b, rows)) / (2.0 * h);
  }
  const double err = (grad - fd).lpNorm<Eigen::Infinity>() /
                     std::max(1.0, fd.lpNorm<Eigen::Infinity>());
  EXPECT_LE(err, 1e-4);
}

TEST(Optimizer, ZeroGradientLeavesParamsUnchanged)
{
  Eigen::VectorXd p(3);
  p << 0.3, -1.0, 2.5;
  const Eigen::VectorXd before = p;
  OptimizerState state(3);
  optimizer_step(p, Eigen::VectorXd::Zero(3), state, 1e-3);
  EXPECT_EQ(p, before);
  EXPECT_EQ(state.step_count, 1);
}

TEST(Optimizer, FirstStepIsSignedLearningRate)
{
  // From zero moments the bias-corrected first and second moments are g and
  // g^2, so the update is -lr * g / (|g| + eps).
  Eigen::VectorXd g(4);
  g << 0.5, -2.0, 1e-3, -0.25;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(4);
  OptimizerState state(4);
  const double lr = 1e-3, eps = 1e-8;
  optimizer_step(p, g, state, lr);
  for (Eigen::Index i = 0; i < 4; ++i) {
    const double expected = -lr * g(i) / (std::abs(g(i)) + eps);
    EXPECT_NEAR(p(i), expected, 1e-15);
    EXPECT_EQ(std::signbit(p(i)), !std::signbit(g(i)));
  }
}

TEST(Optimizer, NonFiniteGradientAbortsStep)
{
  Eigen::VectorXd p = Eigen::VectorXd::Ones(2);
  OptimizerState state(2);
  Eigen::VectorXd g(2);
  g << 1.0, std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(optimizer_step(p, g, state, 0.1), TrainingError);
  EXPECT_EQ(p, Eigen::VectorXd::Ones(2));
  EXPECT_EQ(state.step_count, 0);
}

TEST(Optimizer, ShapeMismatchThrows)
{
  Eigen::VectorXd p = Eigen::VectorXd::Ones(2);
  OptimizerState state(2);
  EXPECT_THROW(optimizer_step(p, Eigen::VectorXd::Ones(3), state, 0.1), ConfigError);
}

TEST(Optimizer, ConvexQuadraticConverges)
{
  // With first-moment decay 0.9 the linearised update contracts by at most
  // sqrt(0.9) per step, so 100 steps cannot reach 1e-6 from an O(1) start;
  // 300 steps can.
  Rng rng(21);
  const auto rows = all_rows(1);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd a(3), c(3);
    for (Eigen::Index i = 0; i < 3; ++i) {
      a(i) = 0.2 + 2.0 * rng.uniform();
      c(i) = 2.0 * rng.uniform() - 1.0;
    }
    const Bowl f(a, c);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
    OptimizerState state(3);
    Eigen::VectorXd g;
    for (int s = 0; s < 300; ++s) {
      f.value_and_grad(p, rows, g);
      optimizer_step(p, g, state, 0.05);
    }
    EXPECT_LE((p - c).lpNorm<Eigen::Infinity>(), 1e-6) << "trial " << trial;
  }
}

TEST(ParamVectorTest, LayoutAndSegments)
{
  ParamVector pv;
  pv.add_block("a", Eigen::Vector2d(1.0, 2.0));
  pv.add_block("b", Eigen::Vector3d(3.0, 4.0, 5.0));
  EXPECT_EQ(pv.size(), 5);
  EXPECT_EQ(pv.block("b").offset, 2);
  EXPECT_DOUBLE_EQ(pv.segment("b")(2), 5.0);
  EXPECT_NO_THROW(pv.check());
  EXPECT_THROW(pv.add_block("a", Eigen::Vector2d::Zero()), ConfigError);
  EXPECT_THROW(pv.block("zz"), ArgumentError);
  pv.values()(0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(pv.check(), ParameterError);
}

TEST(Holdout, SplitIsSortedDisjointAndSeeded)
{
  const auto a = holdout_split(100, 0.1, 5);
  const auto b = holdout_split(100, 0.1, 5);
  EXPECT_EQ(a.val.size(), 10u);
  EXPECT_EQ(a.train.size(), 90u);
  EXPECT_EQ(a.val, b.val);
  EXPECT_TRUE(std::is_sorted(a.val.begin(), a.val.end()));
  std::vector<int> seen(100, 0);
  for (auto i : a.train)
    ++seen[static_cast<std::size_t>(i)];
  for (auto i : a.val)
    ++seen[static_cast<std::size_t>(i)];
  for (int s : seen)
    EXPECT_EQ(s, 1);
  EXPECT_EQ(holdout_split(10, 0.01, 1).val.size(), 1u);
}

TEST(Minimize, TraceIsBitwiseDeterministic)
{
  Rng rng(3);
  Eigen::VectorXd x(3000);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x(i) = rng.normal();
  const MarginalNll nll(x, -5.0, 5.0);
  const auto split = holdout_split(x.size(), 0.1, 1);
  FitSettings fs;
  fs.epochs = 3;
  fs.batch_size = 500;
  fs.seed = 9;
  const Eigen::VectorXd init = Eigen::VectorXd::Zero(3 * 16 + 1);
  const auto r1 = minimize(nll, init, split.train, split.val, fs);
  const auto r2 = minimize(nll, init, split.train, split.val, fs);
  ASSERT_EQ(r1.trace.size(), 4u);
  ASSERT_EQ(r1.trace.size(), r2.trace.size());
  for (std::size_t i = 0; i < r1.trace.size(); ++i) {
    EXPECT_EQ(r1.trace[i].train_nll, r2.trace[i].train_nll);
    EXPECT_EQ(r1.trace[i].val_nll, r2.trace[i].val_nll);
  }
  EXPECT_EQ(r1.params, r2.params);
  EXPECT_LE(r1.best_val_nll, r1.initial_val_nll);

  std::ostringstream os;
  write_trace_csv(os, r1.trace);
  EXPECT_EQ(os.str().substr(0, 23), "epoch,train_nll,val_nll");
}
