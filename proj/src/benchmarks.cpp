#include "copulaflow/benchmarks.hpp"
#include "copulaflow/errors.hpp"
#include "copulaflow/random.hpp"
#include "copulaflow/special.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace copulaflow {

void
CopulaSpec::validate() const
{
  const double p = parameter;
  if (!std::isfinite(p))
    throw ParameterError("copula parameter must be finite");
  switch (family) {
    case CopulaFamily::gaussian:
      if (!(p > -1.0 && p < 1.0))
        throw ParameterError("gaussian copula needs rho in (-1, 1)");
      break;
    case CopulaFamily::clayton:
      if (!(p > 0.0))
        throw ParameterError("clayton copula needs theta > 0");
      break;
    case CopulaFamily::gumbel:
      if (!(p >= 1.0))
        throw ParameterError("gumbel copula needs theta >= 1");
      break;
    case CopulaFamily::frank:
      if (p == 0.0)
        throw ParameterError("frank copula needs theta != 0");
      break;
    case CopulaFamily::independence:
      break;
  }
}

std::string
family_name(CopulaFamily family)
{
  switch (family) {
    case CopulaFamily::gaussian:
      return "gaussian";
    case CopulaFamily::clayton:
      return "clayton";
    case CopulaFamily::gumbel:
      return "gumbel";
    case CopulaFamily::frank:
      return "frank";
    case CopulaFamily::independence:
      return "independence";
  }
  return "unknown";
}

CopulaFamily
parse_family(std::string_view name)
{
  for (auto f : { CopulaFamily::gaussian,
                  CopulaFamily::clayton,
                  CopulaFamily::gumbel,
                  CopulaFamily::frank,
                  CopulaFamily::independence })
    if (family_name(f) == name)
      return f;
  throw ArgumentError("unknown copula family '" + std::string(name) + "'");
}

double
kendall_tau(const CopulaSpec& spec)
{
  spec.validate();
  const double t = spec.parameter;
  switch (spec.family) {
    case CopulaFamily::gaussian:
      return 2.0 / std::numbers::pi * std::asin(t);
    case CopulaFamily::clayton:
      return t / (t + 2.0);
    case CopulaFamily::gumbel:
      return 1.0 - 1.0 / t;
    case CopulaFamily::frank:
      return 1.0 - 4.0 / t * (1.0 - debye1(t));
    case CopulaFamily::independence:
      return 0.0;
  }
  return 0.0;
}

namespace {

double
clamp_open(double u)
{
  return std::clamp(u, 1e-12, 1.0 - 1e-12);
}

double
gumbel_cdf(double u, double v, double theta)
{
  const double x = -std::log(u), y = -std::log(v);
  return std::exp(-std::pow(std::pow(x, theta) + std::pow(y, theta), 1.0 / theta));
}

} // namespace

double
h_function(const CopulaSpec& spec, double v, double u)
{
  u = clamp_open(u);
  v = clamp_open(v);
  const double t = spec.parameter;
  switch (spec.family) {
    case CopulaFamily::gaussian:
      return normal_cdf((normal_quantile(v) - t * normal_quantile(u)) /
                        std::sqrt(1.0 - t * t));
    case CopulaFamily::clayton:
      return std::pow(u, -t - 1.0) *
             std::pow(std::pow(u, -t) + std::pow(v, -t) - 1.0, -1.0 - 1.0 / t);
    case CopulaFamily::frank: {
      const double a = std::expm1(-t * u), b = std::expm1(-t * v);
      return std::exp(-t * u) * b / (std::expm1(-t) + a * b);
    }
    case CopulaFamily::gumbel: {
      const double x = -std::log(u), y = -std::log(v);
      const double s = std::pow(x, t) + std::pow(y, t);
      return gumbel_cdf(u, v, t) * std::pow(s, 1.0 / t - 1.0) * std::pow(x, t - 1.0) / u;
    }
    case CopulaFamily::independence:
      return v;
  }
  return v;
}

double
h_inverse(const CopulaSpec& spec, double w, double u)
{
  u = clamp_open(u);
  w = clamp_open(w);
  const double t = spec.parameter;
  switch (spec.family) {
    case CopulaFamily::gaussian:
      return normal_cdf(t * normal_quantile(u) +
                        std::sqrt(1.0 - t * t) * normal_quantile(w));
    case CopulaFamily::clayton:
      return std::pow((std::pow(w, -t / (1.0 + t)) - 1.0) * std::pow(u, -t) + 1.0,
                      -1.0 / t);
    case CopulaFamily::frank:
      return -std::log1p(w * std::expm1(-t) / (w + (1.0 - w) * std::exp(-t * u))) / t;
    case CopulaFamily::gumbel: {
      // h is increasing in v; bisect on (0, 1).
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (h_function(spec, mid, u) < w)
          lo = mid;
        else
          hi = mid;
      }
      return 0.5 * (lo + hi);
    }
    case CopulaFamily::independence:
      return w;
  }
  return w;
}

Eigen::MatrixXd
sample_bivariate_copula(const CopulaSpec& spec, Eigen::Index n, std::uint64_t seed)
{
  spec.validate();
  Rng rng(derive_seed(seed, "bivariate-copula"));
  Eigen::MatrixXd out(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (spec.family == CopulaFamily::gaussian) {
      const double z1 = rng.normal(), z2 = rng.normal();
      const double rho = spec.parameter;
      out(i, 0) = normal_cdf(z1);
      out(i, 1) = normal_cdf(rho * z1 + std::sqrt(1.0 - rho * rho) * z2);
    } else {
      const double u = rng.uniform_open(), w = rng.uniform_open();
      out(i, 0) = u;
      out(i, 1) = h_inverse(spec, w, u);
    }
  }
  return out;
}

double
copula_logdensity_analytic(const CopulaSpec& spec, double u, double v)
{
  spec.validate();
  u = clamp_open(u);
  v = clamp_open(v);
  const double t = spec.parameter;
  switch (spec.family) {
    case CopulaFamily::gaussian: {
      const double x = normal_quantile(u), y = normal_quantile(v);
      const double r2 = 1.0 - t * t;
      return -0.5 * std::log(r2) - (t * t * (x * x + y * y) - 2.0 * t * x * y) / (2.0 * r2);
    }
    case CopulaFamily::clayton:
      return std::log1p(t) - (1.0 + t) * (std::log(u) + std::log(v)) -
             (2.0 + 1.0 / t) * std::log(std::pow(u, -t) + std::pow(v, -t) - 1.0);
    case CopulaFamily::frank: {
      const double em = -std::expm1(-t);
      const double den = em - std::expm1(-t * u) * std::expm1(-t * v);
      return std::log(std::abs(t * em)) - t * (u + v) - 2.0 * std::log(std::abs(den));
    }
    case CopulaFamily::gumbel: {
      const double x = -std::log(u), y = -std::log(v);
      const double s = std::pow(x, t) + std::pow(y, t);
      const double a = std::pow(s, 1.0 / t);
      return -a + x + y + (t - 1.0) * (std::log(x) + std::log(y)) +
             (1.0 / t - 2.0) * std::log(s) + std::log(a + t - 1.0);
    }
    case CopulaFamily::independence:
      return 0.0;
  }
  return 0.0;
}

Eigen::MatrixXd
gen_two_rings(Eigen::Index n, std::uint64_t seed)
{
  Rng rng(derive_seed(seed, "two-rings"));
  Eigen::MatrixXd out(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double angle = 2.0 * std::numbers::pi * rng.uniform();
    const double ring = rng.uniform() < 0.5 ? 1.0 : 2.0;
    const double r = ring + 0.1 * rng.normal();
    out(i, 0) = r * std::cos(angle);
    out(i, 1) = r * std::sin(angle);
  }
  return out;
}

Eigen::MatrixXd
gen_mixed_vine(Eigen::Index n, std::uint64_t seed, const MixedVineParams& params)
{
  const CopulaSpec c12{ CopulaFamily::gaussian, params.rho_12 };
  const CopulaSpec c23{ CopulaFamily::clayton, params.theta_23 };
  const CopulaSpec c13_2{ CopulaFamily::gumbel, params.theta_13_2 };
  c12.validate();
  c23.validate();
  c13_2.validate();
  if (params.population < 1 || params.successes < 0 || params.draws < 0 ||
      params.successes > params.population || params.draws > params.population)
    throw ParameterError("invalid hypergeometric parameters");

  Rng rng(derive_seed(seed, "mixed-vine"));
  Eigen::MatrixXd out(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w1 = rng.uniform_open(), w2 = rng.uniform_open(), w3 = rng.uniform_open();
    const double u1 = w1;
    const double u2 = h_inverse(c12, w2, u1);
    const double u1_given_2 = h_function(c12, u1, u2);
    const double u3_given_2 = h_inverse(c13_2, w3, u1_given_2);
    const double u3 = h_inverse(c23, u3_given_2, u2);
    out(i, 0) = half_normal_quantile(u1);
    out(i, 1) = hypergeometric_quantile(u2, params.population, params.successes, params.draws);
    out(i, 2) = gamma2_quantile(u3);
  }
  return out;
}

} // namespace copulaflow
