#include "copulaflow/random.hpp"
#include "copulaflow/spline.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace copulaflow;

namespace {

RawSplineParamsd
random_raw(Rng& rng, Eigen::Index k, double scale = 1.5)
{
  const double lo = 4.0 * rng.normal();
  const double hi = lo + 0.1 + 5.0 * rng.uniform();
  auto raw = RawSplineParamsd::zeros(k, lo, hi);
  for (Eigen::Index i = 0; i < k; ++i) {
    raw.widths_raw(i) = scale * rng.normal();
    raw.heights_raw(i) = scale * rng.normal();
  }
  for (Eigen::Index i = 0; i <= k; ++i)
    raw.slopes_raw(i) = scale * rng.normal();
  return raw;
}

double
vec_rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
  const double scale = std::max(b.cwiseAbs().maxCoeff(), 1e-12);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

// Central differences of (value, log_deriv) w.r.t. the flat raw vector.
std::pair<Eigen::VectorXd, Eigen::VectorXd>
fd_param_grad(const RawSplineParamsd& raw,
              double point,
              SplineDirection dir,
              double step)
{
  const Eigen::VectorXd flat = raw.flat();
  Eigen::VectorXd dv(flat.size()), dl(flat.size());
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    Eigen::VectorXd p = flat, m = flat;
    p(i) += step;
    m(i) -= step;
    const auto sp = normalize_params(
      RawSplineParamsd::from_flat(p, raw.lower, raw.upper));
    const auto sm = normalize_params(
      RawSplineParamsd::from_flat(m, raw.lower, raw.upper));
    const auto ep = dir == SplineDirection::forward ? rq_forward(sp, point)
                                                    : rq_inverse(sp, point);
    const auto em = dir == SplineDirection::forward ? rq_forward(sm, point)
                                                    : rq_inverse(sm, point);
    dv(i) = (ep.value - em.value) / (2 * step);
    dl(i) = (ep.log_deriv - em.log_deriv) / (2 * step);
  }
  return { dv, dl };
}

} // namespace

TEST(SplineNormalize, ZeroRawGivesIdentityKnots)
{
  const auto sp = normalize_params(RawSplineParamsd::zeros(4, 0.0, 1.0));
  const Eigen::Vector<double, 5> expected{ 0.0, 0.25, 0.5, 0.75, 1.0 };
  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(sp.knot_u(i), expected(i), 1e-15);
    EXPECT_NEAR(sp.knot_x(i), expected(i), 1e-15);
    EXPECT_NEAR(sp.deriv(i), 1.0, 1e-12);
  }
}

TEST(SplineNormalize, ZeroRawWithBoundsIsAffine)
{
  const auto sp = normalize_params(RawSplineParamsd::zeros(4, -2.0, 3.0));
  for (int i = 0; i <= 4; ++i)
    EXPECT_NEAR(sp.knot_x(i), -2.0 + 5.0 * sp.knot_u(i), 1e-14);
  const auto f = rq_forward(sp, 0.5);
  EXPECT_NEAR(f.value, 0.5, 1e-14);
  EXPECT_NEAR(f.log_deriv, std::log(5.0), 1e-12);
  const auto inv = rq_inverse(sp, 0.5);
  EXPECT_NEAR(inv.value, 0.5, 1e-14);
  EXPECT_NEAR(inv.log_deriv, -std::log(5.0), 1e-12);
}

TEST(SplineNormalize, RandomParamsSatisfyInvariants)
{
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto raw = random_raw(rng, 8, 3.0);
    const auto sp = normalize_params(raw);
    ASSERT_EQ(sp.knot_u(0), 0.0);
    ASSERT_EQ(sp.knot_u(8), 1.0);
    ASSERT_EQ(sp.knot_x(0), raw.lower);
    ASSERT_EQ(sp.knot_x(8), raw.upper);
    const double range = raw.upper - raw.lower;
    for (int k = 0; k < 8; ++k) {
      ASSERT_GE(sp.knot_u(k + 1) - sp.knot_u(k), kMinBinFraction * (1 - 1e-9));
      ASSERT_GE(sp.knot_x(k + 1) - sp.knot_x(k),
                kMinBinFraction * range * (1 - 1e-9));
    }
    for (int k = 0; k <= 8; ++k)
      ASSERT_GE(sp.deriv(k), kMinDerivative);
  }
}

TEST(SplineNormalize, RejectsBadInput)
{
  auto raw = RawSplineParamsd::zeros(4, 0.0, 1.0);
  raw.heights_raw(2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(normalize_params(raw), ParameterError);
  EXPECT_THROW(normalize_params(RawSplineParamsd::zeros(1, 0.0, 1.0)),
               ConfigError);
  EXPECT_THROW(normalize_params(RawSplineParamsd::zeros(4, 1.0, 1.0)),
               ConfigError);
}

TEST(SplineEvaluate, IdentityCase)
{
  const auto sp = normalize_params(RawSplineParamsd::zeros(4, 0.0, 1.0));
  const auto f = rq_forward(sp, 0.3);
  EXPECT_NEAR(f.value, 0.3, 1e-15);
  EXPECT_NEAR(f.log_deriv, 0.0, 1e-12);
  const auto inv = rq_inverse(sp, 0.7);
  EXPECT_NEAR(inv.value, 0.7, 1e-15);
  EXPECT_NEAR(inv.log_deriv, 0.0, 1e-12);
}

TEST(SplineEvaluate, DerivativeMatchesFiniteDifferences)
{
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto sp = normalize_params(random_raw(rng, 8));
    for (int i = 0; i <= 100; ++i) {
      const double u = std::clamp(i / 100.0, 1e-6, 1.0 - 1e-6);
      const double h = 1e-6;
      const double fd =
        (rq_forward(sp, u + h).value - rq_forward(sp, u - h).value) / (2 * h);
      const double an = std::exp(rq_forward(sp, u).log_deriv);
      EXPECT_LE(std::abs(fd - an) / an, 1e-5) << "u=" << u;
    }
  }
}

TEST(SplineEvaluate, RoundTripAndAntisymmetry)
{
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const auto sp = normalize_params(random_raw(rng, 2 + rng.index(30)));
    const double u = rng.uniform();
    const auto f = rq_forward(sp, u);
    const auto inv = rq_inverse(sp, f.value);
    EXPECT_LE(std::abs(inv.value - u), 1e-10);
    EXPECT_LE(std::abs(f.log_deriv + inv.log_deriv), 1e-8);
  }
}

TEST(SplineEvaluate, StrictlyMonotone)
{
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto sp = normalize_params(random_raw(rng, 16));
    double prev = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 2000; ++i) {
      const double x = rq_forward(sp, i / 2000.0).value;
      ASSERT_GT(x, prev);
      prev = x;
    }
  }
}

TEST(SplineEvaluate, InverseDensityIntegratesToOne)
{
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const auto sp = normalize_params(random_raw(rng, 8, 1.0));
    const int n = 10000;
    const double a = sp.lower(), b = sp.upper(), step = (b - a) / (n - 1);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
      sum += w * std::exp(rq_inverse(sp, a + i * step).log_deriv);
    }
    EXPECT_NEAR(sum * step, 1.0, 1e-4);
  }
}

TEST(SplineEvaluate, ClampsOutOfRange)
{
  const auto sp = normalize_params(RawSplineParamsd::zeros(4, -1.0, 2.0));
  const auto lo = rq_inverse(sp, -5.0);
  EXPECT_TRUE(lo.clamped);
  EXPECT_EQ(lo.value, 0.0);
  const auto hi = rq_forward(sp, 1.5);
  EXPECT_TRUE(hi.clamped);
  EXPECT_EQ(hi.value, 2.0);
  EXPECT_FALSE(rq_forward(sp, 0.5).clamped);
}

TEST(SplineGradients, IdentitySplineMatchesFiniteDifferences)
{
  const auto raw = RawSplineParamsd::zeros(6, 0.0, 1.0);
  for (double u : { 0.13, 0.42, 0.77 }) {
    for (auto dir : { SplineDirection::forward, SplineDirection::inverse }) {
      const auto g = rq_param_gradients(raw, u, dir);
      const auto [fv, fl] = fd_param_grad(raw, u, dir, 1e-5);
      ASSERT_TRUE(g.dvalue.allFinite());
      EXPECT_LE(vec_rel_err(g.dvalue, fv), 1e-4);
      EXPECT_LE(vec_rel_err(g.dlog, fl), 1e-4);
    }
  }
}

TEST(SplineGradients, ClampedPointHasZeroGradient)
{
  Rng rng(21);
  const auto raw = random_raw(rng, 8);
  const auto g =
    rq_param_gradients(raw, raw.lower - 1.0, SplineDirection::inverse);
  EXPECT_TRUE(g.eval.clamped);
  EXPECT_EQ(g.dvalue.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.dlog.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SplineGradients, RandomConfigurationsMatchFiniteDifferences)
{
  Rng rng(34);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto raw = random_raw(rng, 2 + rng.index(10), 1.0);
    const auto dir =
      trial % 2 == 0 ? SplineDirection::forward : SplineDirection::inverse;
    const double u = 0.02 + 0.96 * rng.uniform();
    const double point =
      dir == SplineDirection::forward
        ? u
        : rq_forward(normalize_params(raw), u).value;
    const auto g = rq_param_gradients(raw, point, dir);
    const auto [fv, fl] = fd_param_grad(raw, point, dir, 1e-5);
    worst = std::max({ worst, vec_rel_err(g.dvalue, fv), vec_rel_err(g.dlog, fl) });
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(SplineGradients, PointDerivativesMatchFiniteDifferences)
{
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    const auto sp = normalize_params(random_raw(rng, 8, 1.0));
    const double u = 0.05 + 0.9 * rng.uniform();
    const double x = rq_forward(sp, u).value;
    const double h = 1e-6 * sp.range();
    const auto gi = rq_point_grad(sp, x, SplineDirection::inverse);
    const double fd_l =
      (rq_inverse(sp, x + h).log_deriv - rq_inverse(sp, x - h).log_deriv) /
      (2 * h);
    EXPECT_NEAR(gi.dvalue_dpoint, std::exp(gi.log_deriv), 1e-9 * gi.dvalue_dpoint);
    EXPECT_NEAR(gi.dlog_dpoint, fd_l, 1e-4 * std::max(1.0, std::abs(fd_l)));
    const auto gf = rq_point_grad(sp, u, SplineDirection::forward);
    const double fd_f =
      (rq_forward(sp, u + 1e-6).log_deriv - rq_forward(sp, u - 1e-6).log_deriv) /
      2e-6;
    EXPECT_NEAR(gf.dlog_dpoint, fd_f, 1e-4 * std::max(1.0, std::abs(fd_f)));
  }
}
