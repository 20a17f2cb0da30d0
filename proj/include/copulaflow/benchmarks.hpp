#pragma once

// Seeded synthetic fixtures: bivariate parametric copulas, two rings and a
// three-variable mixed vine.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <string_view>

namespace copulaflow {

enum class CopulaFamily
{
  gaussian,
  clayton,
  gumbel,
  frank,
  independence
};

struct CopulaSpec
{
  CopulaFamily family = CopulaFamily::independence;
  double parameter = 0.0; //!< rho for gaussian, theta otherwise

  //! Throws ParameterError outside the family's parameter range.
  void validate() const;
};

std::string
family_name(CopulaFamily family);

//! Parses "gaussian", "clayton", "gumbel", "frank" or "independence".
CopulaFamily
parse_family(std::string_view name);

//! Kendall's tau of the family in closed form.
double
kendall_tau(const CopulaSpec& spec);

//! h(v | u) = dC(u, v) / du.
double
h_function(const CopulaSpec& spec, double v, double u);

//! Inverse of h_function in v.
double
h_inverse(const CopulaSpec& spec, double w, double u);

//! n x 2 matrix in [0, 1]^2.
Eigen::MatrixXd
sample_bivariate_copula(const CopulaSpec& spec, Eigen::Index n, std::uint64_t seed);

//! log c(u, v); inputs are clamped to [1e-12, 1 - 1e-12].
double
copula_logdensity_analytic(const CopulaSpec& spec, double u, double v);

//! Two concentric rings of radius 1 and 2 with radial noise 0.1.
Eigen::MatrixXd
gen_two_rings(Eigen::Index n, std::uint64_t seed);

struct MixedVineParams
{
  double rho_12 = 0.7;      //!< Gaussian pair (X1, X2)
  double theta_23 = 2.0;    //!< Clayton pair (X2, X3)
  double theta_13_2 = 2.0;  //!< Gumbel pair (X1, X3 | X2)
  int population = 20;
  int successes = 7;
  int draws = 12;
};

//! n x 3: X1 half-normal, X2 hypergeometric (integer valued), X3 Gamma(2, 1),
//! coupled through a D-vine X1 - X2 - X3.
Eigen::MatrixXd
gen_mixed_vine(Eigen::Index n, std::uint64_t seed, const MixedVineParams& params = {});

} // namespace copulaflow
