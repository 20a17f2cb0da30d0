#include "copulaflow/benchmarks.hpp"
#include "copulaflow/errors.hpp"
#include "copulaflow/random.hpp"
#include "copulaflow/special.hpp"
#include "copulaflow/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

using namespace copulaflow;

namespace {

double
phi(double x)
{
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double
Phi(double x)
{
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

//! Standard normal quantile by bisection on erfc.
double
Phi_inv(double p)
{
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (Phi(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

//! Bivariate normal CDF: integral of phi(t) Phi((y - rho t) / s) up to x,
//! composite Simpson on a fixed grid anchored at -12.
double
bvn_cdf(double x, double y, double rho)
{
  const double s = std::sqrt(1.0 - rho * rho);
  constexpr int n = 40000;
  const double a = -12.0, h = (x - a) / n;
  auto f = [&](double t) { return phi(t) * Phi((y - rho * t) / s); };
  double sum = f(a) + f(x);
  for (int i = 1; i < n; ++i)
    sum += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return sum * h / 3.0;
}

double
gaussian_copula_cdf(double u, double v, double rho)
{
  return bvn_cdf(Phi_inv(u), Phi_inv(v), rho);
}

const std::vector<CopulaSpec>&
families()
{
  static const std::vector<CopulaSpec> f{ { CopulaFamily::gaussian, 0.8 },
                                          { CopulaFamily::clayton, 2.0 },
                                          { CopulaFamily::gumbel, 2.0 },
                                          { CopulaFamily::frank, 5.0 },
                                          { CopulaFamily::independence, 0.0 } };
  return f;
}

} // namespace

TEST(Special, NormalQuantileMatchesBisection)
{
  for (double p : { 1e-12, 1e-6, 0.01, 0.2, 0.5, 0.77, 0.99, 0.999999 })
    EXPECT_NEAR(normal_quantile(p), Phi_inv(p), 1e-9 * std::max(1.0, std::abs(Phi_inv(p))));
  EXPECT_EQ(normal_quantile(0.0), -INFINITY);
  EXPECT_EQ(normal_quantile(1.0), INFINITY);
  EXPECT_THROW(normal_quantile(1.2), ArgumentError);
  for (double x : { -3.0, 0.0, 1.5 })
    EXPECT_NEAR(normal_cdf(x), Phi(x), 1e-15);
}

TEST(Special, GammaTwoClosedForm)
{
  for (double x : { 0.1, 1.0, 2.5, 8.0 }) {
    const double c = 1.0 - std::exp(-x) * (1.0 + x);
    EXPECT_NEAR(gamma2_cdf(x), c, 1e-14);
    EXPECT_NEAR(gamma2_quantile(c), x, 1e-9);
  }
}

TEST(Special, HalfNormalQuantile)
{
  // P(|Z| <= x) = 2 Phi(x) - 1.
  for (double x : { 0.2, 1.0, 2.7 })
    EXPECT_NEAR(half_normal_quantile(2.0 * Phi(x) - 1.0), x, 1e-9);
}

TEST(Special, HypergeometricPmfByCounting)
{
  auto choose = [](int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i)
      r = r * (n - k + i) / i;
    return r;
  };
  double total = 0.0;
  for (int k = 0; k <= 7; ++k) {
    const double p = choose(7, k) * choose(13, 12 - k) / choose(20, 12);
    EXPECT_NEAR(std::exp(hypergeometric_logpmf(k, 20, 7, 12)), p, 1e-12);
    total += p;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_EQ(hypergeometric_quantile(0.0, 20, 7, 12), 0);
  EXPECT_EQ(hypergeometric_quantile(1.0, 20, 7, 12), 7);
}

TEST(Special, DebyeByQuadrature)
{
  for (double x : { 0.5, 2.0, 5.0 }) {
    constexpr int n = 100000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const double t = (i + 0.5) * x / n;
      s += t / std::expm1(t);
    }
    EXPECT_NEAR(debye1(x), s / n, 1e-8);
  }
}

TEST(Copulas, ParameterValidation)
{
  EXPECT_THROW((CopulaSpec{ CopulaFamily::gaussian, 1.0 }).validate(), ParameterError);
  EXPECT_THROW((CopulaSpec{ CopulaFamily::clayton, -1.0 }).validate(), ParameterError);
  EXPECT_THROW((CopulaSpec{ CopulaFamily::gumbel, 0.5 }).validate(), ParameterError);
  EXPECT_THROW((CopulaSpec{ CopulaFamily::frank, 0.0 }).validate(), ParameterError);
  EXPECT_EQ(parse_family("clayton"), CopulaFamily::clayton);
  EXPECT_THROW(parse_family("student"), ArgumentError);
}

TEST(Copulas, ClosedFormTau)
{
  EXPECT_NEAR(kendall_tau(CopulaSpec{ CopulaFamily::clayton, 2.0 }), 0.5, 1e-15);
  EXPECT_NEAR(kendall_tau(CopulaSpec{ CopulaFamily::gumbel, 2.0 }), 0.5, 1e-15);
  EXPECT_NEAR(kendall_tau(CopulaSpec{ CopulaFamily::gaussian, 0.8 }),
              2.0 / std::numbers::pi * std::asin(0.8), 1e-15);
  EXPECT_EQ(kendall_tau(CopulaSpec{}), 0.0);
}

TEST(Copulas, SampledTauMatchesClosedForm)
{
  for (const auto& spec : families()) {
    const auto u = sample_bivariate_copula(spec, 20000, 3);
    EXPECT_NEAR(kendall_tau(u.col(0), u.col(1)), kendall_tau(spec), 0.02) << family_name(spec.family);
  }
}

TEST(Copulas, SampledMarginsAreUniform)
{
  Rng rng(1);
  const Eigen::VectorXd ref = rng.uniform_matrix(20000, 1);
  for (const auto& spec : families()) {
    const auto u = sample_bivariate_copula(spec, 20000, 4);
    for (int j = 0; j < 2; ++j)
      EXPECT_GT(ks_two_sample(u.col(j), ref).p_value, 0.01) << family_name(spec.family);
  }
}

TEST(Copulas, HFunctionInverse)
{
  for (const auto& spec : families())
    for (double u : { 0.1, 0.5, 0.93 })
      for (double w : { 0.05, 0.4, 0.8 })
        EXPECT_NEAR(h_function(spec, h_inverse(spec, w, u), u), w, 1e-9) << family_name(spec.family);
}

TEST(Copulas, AnalyticDensityExamples)
{
  EXPECT_EQ(copula_logdensity_analytic(CopulaSpec{}, 0.3, 0.8), 0.0);
  EXPECT_NEAR(copula_logdensity_analytic(CopulaSpec{ CopulaFamily::gaussian, 0.0 }, 0.2, 0.9), 0.0, 1e-15);
}

TEST(Copulas, GaussianDensityMatchesMixedPartial)
{
  const double rho = 0.8, h = 1e-4;
  for (auto [u, v] : { std::pair{ 0.5, 0.5 }, std::pair{ 0.3, 0.7 } }) {
    const double num = (gaussian_copula_cdf(u + h, v + h, rho) - gaussian_copula_cdf(u + h, v - h, rho) -
                        gaussian_copula_cdf(u - h, v + h, rho) + gaussian_copula_cdf(u - h, v - h, rho)) /
                       (4.0 * h * h);
    EXPECT_NEAR(std::exp(copula_logdensity_analytic({ CopulaFamily::gaussian, rho }, u, v)), num, 1e-4);
  }
}

TEST(Copulas, DensityIntegratesToOne)
{
  constexpr int n = 400;
  for (const auto& spec : families()) {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        s += std::exp(copula_logdensity_analytic(spec, (i + 0.5) / n, (j + 0.5) / n));
    EXPECT_NEAR(s / (n * n), 1.0, 1e-2) << family_name(spec.family);
  }
}

TEST(Copulas, HFunctionIsDensityIntegral)
{
  // h(v | u) = integral of c(u, t) dt over [0, v].
  for (const auto& spec : families()) {
    const double u = 0.35, v = 0.6;
    constexpr int n = 20000;
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      s += std::exp(copula_logdensity_analytic(spec, u, (i + 0.5) * v / n));
    EXPECT_NEAR(h_function(spec, v, u), s * v / n, 1e-5) << family_name(spec.family);
  }
}

TEST(TwoRings, RadiiAndAngles)
{
  const auto x = gen_two_rings(20000, 5);
  ASSERT_EQ(x.cols(), 2);
  Eigen::VectorXd r = x.rowwise().norm();
  Eigen::VectorXd theta(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    theta(i) = std::atan2(x(i, 1), x(i, 0));

  // Histogram of radii: one mode on each side of 1.5.
  constexpr double w = 0.02;
  std::vector<int> hist(150, 0);
  for (double v : r)
    if (v < 3.0)
      ++hist[static_cast<std::size_t>(v / w)];
  auto mode = [&](std::size_t a, std::size_t b) {
    std::size_t best = a;
    for (std::size_t i = a; i < b; ++i)
      if (hist[i] > hist[best])
        best = i;
    return (best + 0.5) * w;
  };
  EXPECT_NEAR(mode(0, 75), 1.0, 0.05);
  EXPECT_NEAR(mode(75, 150), 2.0, 0.05);

  Rng rng(9);
  Eigen::VectorXd ref(20000);
  for (auto& v : ref)
    v = std::numbers::pi * (2.0 * rng.uniform() - 1.0);
  EXPECT_GT(ks_two_sample(theta, ref).p_value, 0.01);
}

TEST(TwoRings, SeededDeterminism)
{
  const auto a = gen_two_rings(500, 3), b = gen_two_rings(500, 3), c = gen_two_rings(500, 4);
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()), 0);
  EXPECT_NE(a, c);
}

TEST(MixedVine, SupportAndMarginals)
{
  const auto x = gen_mixed_vine(20000, 8);
  ASSERT_EQ(x.cols(), 3);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    EXPECT_EQ(x(i, 1), std::round(x(i, 1)));
    EXPECT_GE(x(i, 1), 0.0);
    EXPECT_LE(x(i, 1), 7.0);
  }

  std::mt19937_64 eng(123);
  std::normal_distribution<double> z;
  std::gamma_distribution<double> g(2.0, 1.0);
  Eigen::VectorXd half(20000), gam(20000);
  for (Eigen::Index i = 0; i < 20000; ++i) {
    half(i) = std::abs(z(eng));
    gam(i) = g(eng);
  }
  EXPECT_GT(ks_two_sample(x.col(0), half).p_value, 0.01);
  EXPECT_GT(ks_two_sample(x.col(2), gam).p_value, 0.01);
}

TEST(MixedVine, TauSelfConsistency)
{
  const auto small = gen_mixed_vine(20000, 21);
  const auto big = gen_mixed_vine(1000000, 22);
  for (auto [a, b] : { std::pair{ 0, 1 }, std::pair{ 1, 2 }, std::pair{ 0, 2 } })
    EXPECT_NEAR(kendall_tau(small.col(a), small.col(b)), kendall_tau(big.col(a), big.col(b)), 0.03)
      << a << "," << b;
}
