#pragma once

// Scalar distribution functions used by the benchmark fixtures.

namespace copulaflow {

double
normal_cdf(double x);

double
normal_logpdf(double x);

//! Inverse of normal_cdf on (0, 1); +-infinity at the ends.
double
normal_quantile(double p);

//! CDF of Gamma(shape 2, scale 1).
double
gamma2_cdf(double x);

double
gamma2_quantile(double p);

double
half_normal_quantile(double p);

//! log P(K = k) for K ~ Hypergeometric(population, successes, draws).
double
hypergeometric_logpmf(int k, int population, int successes, int draws);

//! Smallest k with P(K <= k) >= p.
int
hypergeometric_quantile(double p, int population, int successes, int draws);

//! Debye function D_1(x) = (1/x) * int_0^x t / (e^t - 1) dt.
double
debye1(double x);

} // namespace copulaflow
