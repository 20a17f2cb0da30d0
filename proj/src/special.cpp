#include "copulaflow/special.hpp"
#include "copulaflow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace copulaflow {

double
normal_cdf(double x)
{
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double
normal_logpdf(double x)
{
  return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
}

double
normal_quantile(double p)
{
  if (!(p >= 0.0 && p <= 1.0))
    throw ArgumentError("normal quantile level must lie in [0, 1]");
  if (p == 0.0)
    return -std::numeric_limits<double>::infinity();
  if (p == 1.0)
    return std::numeric_limits<double>::infinity();

  //! Acklam's rational approximation, then one Halley step.
  static constexpr double a[] = { -3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00 };
  static constexpr double b[] = { -5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01 };
  static constexpr double c[] = { -7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00 };
  static constexpr double d[] = { 7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00 };
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Residual in the tail that keeps relative precision.
  const double e = x < 0.0 ? normal_cdf(x) - p : (1.0 - p) - normal_cdf(-x);
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double
gamma2_cdf(double x)
{
  if (x <= 0.0)
    return 0.0;
  return -std::expm1(-x) - x * std::exp(-x);
}

double
gamma2_quantile(double p)
{
  if (!(p >= 0.0 && p <= 1.0))
    throw ArgumentError("gamma quantile level must lie in [0, 1]");
  if (p == 0.0)
    return 0.0;
  if (p == 1.0)
    return std::numeric_limits<double>::infinity();
  // Bracketed Newton on F(x) - p with density x e^-x.
  double lo = 0.0, hi = 1.0;
  while (gamma2_cdf(hi) < p)
    hi *= 2.0;
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = gamma2_cdf(x) - p;
    if (f < 0.0)
      lo = x;
    else
      hi = x;
    const double dens = x * std::exp(-x);
    double next = dens > 0.0 ? x - f / dens : 0.5 * (lo + hi);
    if (!(next > lo && next < hi))
      next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * std::max(1.0, x)) {
      x = next;
      break;
    }
    x = next;
  }
  return x;
}

double
half_normal_quantile(double p)
{
  if (!(p >= 0.0 && p <= 1.0))
    throw ArgumentError("half-normal quantile level must lie in [0, 1]");
  // Phi^-1((1 + p) / 2) = -Phi^-1((1 - p) / 2), better conditioned near 1.
  return -normal_quantile(0.5 * (1.0 - p));
}

namespace {

double
log_choose(int n, int k)
{
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

} // namespace

double
hypergeometric_logpmf(int k, int population, int successes, int draws)
{
  const int lo = std::max(0, draws + successes - population);
  const int hi = std::min(successes, draws);
  if (k < lo || k > hi)
    return -std::numeric_limits<double>::infinity();
  return log_choose(successes, k) + log_choose(population - successes, draws - k) -
         log_choose(population, draws);
}

int
hypergeometric_quantile(double p, int population, int successes, int draws)
{
  const int lo = std::max(0, draws + successes - population);
  const int hi = std::min(successes, draws);
  double acc = 0.0;
  for (int k = lo; k < hi; ++k) {
    acc += std::exp(hypergeometric_logpmf(k, population, successes, draws));
    if (acc >= p)
      return k;
  }
  return hi;
}

double
debye1(double x)
{
  if (x == 0.0)
    return 1.0;
  if (x < 0.0)
    return debye1(-x) + 0.5 * x;
  // Composite Simpson on a fine grid; the integrand is smooth and bounded.
  const int n = 2000;
  const double h = x / n;
  auto f = [](double t) { return t == 0.0 ? 1.0 : t / std::expm1(t); };
  double s = f(0.0) + f(x);
  for (int i = 1; i < n; ++i)
    s += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return s * h / 3.0 / x;
}

} // namespace copulaflow
