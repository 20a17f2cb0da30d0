#include "copulaflow/stats.hpp"
#include "copulaflow/errors.hpp"
#include "copulaflow/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <utility>
#include <vector>

namespace copulaflow {

namespace {

std::vector<double>
sorted_subsample(const Eigen::VectorXd& a, std::uint64_t seed, std::string_view stream)
{
  std::vector<double> v(a.data(), a.data() + a.size());
  if (a.size() > kKsMaxSamples) {
    Rng rng(derive_seed(seed, stream));
    // Partial Fisher-Yates: the first kKsMaxSamples entries are the sample.
    for (Eigen::Index i = 0; i < kKsMaxSamples; ++i) {
      const Eigen::Index j = i + rng.index(a.size() - i);
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
    v.resize(static_cast<std::size_t>(kKsMaxSamples));
  }
  std::sort(v.begin(), v.end());
  return v;
}

} // namespace

double
kolmogorov_survival(double lambda)
{
  if (lambda <= 0.0)
    return 1.0;
  if (lambda < 1.0) {
    // Theta-function form converges fast for small lambda.
    const double c = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
      const double t = std::exp(-(2.0 * k - 1.0) * (2.0 * k - 1.0) * c);
      s += t;
      if (t < 1e-300)
        break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double t = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 ? 2.0 : -2.0) * t;
    if (t < 1e-300)
      break;
  }
  return std::clamp(s, 0.0, 1.0);
}

KsResult
ks_two_sample(const Eigen::VectorXd& a, const Eigen::VectorXd& b, std::uint64_t seed)
{
  if (a.size() < 2 || b.size() < 2)
    throw DataError("KS test needs at least two points per sample");
  if (a.hasNaN() || b.hasNaN())
    throw DataError("KS test input contains NaN");
  const auto x = sorted_subsample(a, seed, "ks-a");
  const auto y = sorted_subsample(b, seed, "ks-b");
  const double n1 = static_cast<double>(x.size());
  const double n2 = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v)
      ++i;
    while (j < y.size() && y[j] == v)
      ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n1 - static_cast<double>(j) / n2));
  }
  KsResult r;
  r.statistic = d;
  r.n1 = static_cast<Eigen::Index>(x.size());
  r.n2 = static_cast<Eigen::Index>(y.size());
  r.p_value = kolmogorov_survival(std::sqrt(n1 * n2 / (n1 + n2)) * d);
  return r;
}

namespace {

//! Sorts v in place and returns the number of inversions.
long long
merge_count(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi)
{
  if (hi - lo < 2)
    return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  long long swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<long long>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid)
    buf[k++] = v[i++];
  while (j < hi)
    buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<long>(lo), buf.begin() + static_cast<long>(hi),
            v.begin() + static_cast<long>(lo));
  return swaps;
}

long long
tied_pairs(const std::vector<double>& sorted)
{
  long long t = 0, run = 1;
  for (std::size_t i = 1; i <= sorted.size(); ++i) {
    if (i < sorted.size() && sorted[i] == sorted[i - 1]) {
      ++run;
    } else {
      t += run * (run - 1) / 2;
      run = 1;
    }
  }
  return t;
}

} // namespace

double
kendall_tau(const Eigen::VectorXd& x, const Eigen::VectorXd& y)
{
  if (x.size() != y.size())
    throw ArgumentError("kendall_tau needs equal-length inputs");
  if (x.size() < 2)
    throw DataError("kendall_tau needs at least two points");
  const std::size_t n = static_cast<std::size_t>(x.size());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return x(a) < x(b) || (x(a) == x(b) && y(a) < y(b));
  });
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x(idx[i]);
    ys[i] = y(idx[i]);
  }
  const long long n0 = static_cast<long long>(n) * static_cast<long long>(n - 1) / 2;
  const long long n1 = tied_pairs(xs);
  long long n3 = 0, run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && xs[i] == xs[i - 1] && ys[i] == ys[i - 1]) {
      ++run;
    } else {
      n3 += run * (run - 1) / 2;
      run = 1;
    }
  }
  std::vector<double> buf(n);
  const long long swaps = merge_count(ys, buf, 0, n);
  const long long n2 = tied_pairs(ys);
  const double denom = std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
  if (denom == 0.0)
    throw DataError("kendall_tau is undefined for a constant input");
  return static_cast<double>(n0 - n1 - n2 + n3 - 2 * swaps) / denom;
}

LineFit
fit_line(const Eigen::VectorXd& x, const Eigen::VectorXd& y)
{
  if (x.size() != y.size() || x.size() < 2)
    throw ArgumentError("fit_line needs two equal-length vectors with at least two points");
  const double mx = x.mean(), my = y.mean();
  const double sxx = (x.array() - mx).square().sum();
  if (sxx == 0.0)
    throw DataError("fit_line is undefined for constant x");
  const double sxy = ((x.array() - mx) * (y.array() - my)).sum();
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

} // namespace copulaflow
