#pragma once

// Two-sample Kolmogorov-Smirnov test and rank correlation.

#include <Eigen/Dense>
#include <cstdint>

namespace copulaflow {

struct KsResult
{
  double statistic = 0.0;
  double p_value = 1.0;
  Eigen::Index n1 = 0;
  Eigen::Index n2 = 0;
};

//! Largest sample size used per side; larger inputs are subsampled.
inline constexpr Eigen::Index kKsMaxSamples = 10000;

//! Sup-distance between the empirical CDFs with the asymptotic Kolmogorov
//! p-value at effective size n1 n2 / (n1 + n2). Throws DataError on NaN or
//! fewer than two points. Inputs above kKsMaxSamples are subsampled without
//! replacement using `seed`.
KsResult
ks_two_sample(const Eigen::VectorXd& a, const Eigen::VectorXd& b, std::uint64_t seed = 0);

//! P(K > lambda) for the Kolmogorov distribution.
double
kolmogorov_survival(double lambda);

//! Kendall's tau-b in O(n log n).
double
kendall_tau(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

//! Least-squares line y = slope * x + intercept.
struct LineFit
{
  double slope = 0.0;
  double intercept = 0.0;
};

LineFit
fit_line(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

} // namespace copulaflow
