#include "copulaflow/marginal.hpp"
#include "copulaflow/random.hpp"

#include <algorithm>
#include <cmath>

namespace copulaflow {

MarginalFlowModel::MarginalFlowModel(RawSplineParamsd params,
                                     std::string column_id)
  : params_(std::move(params))
  , spline_(normalize_params(params_))
  , column_id_(std::move(column_id))
{}

MarginalFlowModel
MarginalFlowModel::affine(Eigen::Index bins,
                          double lower,
                          double upper,
                          std::string column_id)
{
  return MarginalFlowModel(RawSplineParamsd::zeros(bins, lower, upper),
                           std::move(column_id));
}

std::pair<double, double>
marginal_bounds(const Eigen::VectorXd& samples, const MarginalConfig& config)
{
  if (config.bounds) {
    const auto [lo, hi] = *config.bounds;
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
      throw ConfigError("explicit bounds must be finite with lower < upper");
    return *config.bounds;
  }
  const double lo = samples.minCoeff();
  const double hi = samples.maxCoeff();
  const double range = hi - lo;
  return { lo - config.bound_margin * range, hi + config.bound_margin * range };
}

MarginalNll::MarginalNll(Eigen::VectorXd samples, double lower, double upper)
  : samples_(std::move(samples))
  , lower_(lower)
  , upper_(upper)
{}

double
MarginalNll::value_and_grad(const Eigen::VectorXd& params,
                            RowIndices rows,
                            Eigen::VectorXd& grad) const
{
  const auto sp =
    normalize_params(RawSplineParamsd::from_flat(params, lower_, upper_));
  const double total = reduce_rows(
    rows, params.size(), grad, [&](RowIndices chunk, Eigen::VectorXd& g) {
      SplineKnotGrad<double> kg(sp.bins());
      double sum = 0.0;
      for (const Eigen::Index r : chunk) {
        const auto pg = rq_point_grad(sp, samples_(r), SplineDirection::inverse);
        sum -= pg.log_deriv;
        kg.accumulate(pg, 0.0, -1.0);
      }
      backprop_to_raw(sp, kg, g);
      return sum;
    });
  const double n = static_cast<double>(rows.size());
  grad /= n;
  return total / n;
}

double
MarginalNll::value(const Eigen::VectorXd& params, RowIndices rows) const
{
  const auto sp =
    normalize_params(RawSplineParamsd::from_flat(params, lower_, upper_));
  double sum = 0.0;
  for (const Eigen::Index r : rows)
    sum -= rq_inverse(sp, samples_(r)).log_deriv;
  return sum / static_cast<double>(rows.size());
}

RawSplineParamsd
quantile_start(std::vector<double> v, Eigen::Index k, double lower, double upper)
{
  if (v.empty())
    throw DataError("quantile start needs at least one value");
  for (auto& x : v)
    x = std::clamp(x, lower, upper);
  std::sort(v.begin(), v.end());
  auto empirical = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double t = pos - static_cast<double>(i);
    return i + 1 < v.size() ? v[i] + t * (v[i + 1] - v[i]) : v.back();
  };

  const double range = upper - lower;
  const double kd = static_cast<double>(k);
  const double floor = default_min_bin_fraction(k);
  Eigen::VectorXd frac(k);
  double prev = lower;
  for (Eigen::Index i = 1; i <= k; ++i) {
    const double q = i == k ? upper : std::clamp(empirical(static_cast<double>(i) / kd), prev, upper);
    frac(i - 1) = std::max((q - prev) / range, 2.0 * floor);
    prev = q;
  }
  // The floor total is at most kMaxFloorMass, so renormalising keeps every
  // bin above its floor.
  frac /= frac.sum();

  auto raw = RawSplineParamsd::zeros(k, lower, upper);
  raw.heights_raw = ((frac.array() - floor) / (1.0 - kd * floor)).log().matrix();

  // Widths stay equal (1/k each), so the bin slope is frac * k.
  const Eigen::VectorXd s = frac * kd;
  const double shift = detail::slope_shift(kMinDerivative);
  for (Eigen::Index i = 0; i <= k; ++i) {
    const double d = i == 0 ? s(0) : i == k ? s(k - 1) : std::sqrt(s(i - 1) * s(i));
    const double y = std::max(d - kMinDerivative, 1e-12);
    raw.slopes_raw(i) = y + std::log(-std::expm1(-y)) - shift;
  }
  return raw;
}

MarginalFit
fit_marginal(const Eigen::VectorXd& samples,
             const MarginalConfig& config,
             std::string column_id)
{
  const std::string label = column_id.empty() ? "column" : "column '" + column_id + "'";
  if (samples.size() < 10)
    throw DataError(label + ": at least 10 samples are required");
  if (!samples.allFinite())
    throw DataError(label + ": samples contain NaN or infinite values");
  if (samples.minCoeff() == samples.maxCoeff())
    throw DegenerateDataError(label +
                              " is constant; model it as a discrete column");
  if (config.k_bins < 2)
    throw ConfigError("k_bins must be at least 2");

  const auto [lower, upper] = marginal_bounds(samples, config);
  const MarginalNll objective(samples, lower, upper);
  const auto split =
    holdout_split(samples.size(), config.val_fraction, derive_seed(config.seed, "val"));

  std::vector<double> train_values;
  train_values.reserve(split.train.size());
  for (const Eigen::Index r : split.train)
    train_values.push_back(samples(r));

  FitSettings fs;
  fs.epochs = config.epochs;
  fs.batch_size = config.batch_size;
  fs.learning_rate = config.learning_rate;
  fs.patience = config.patience;
  fs.seed = derive_seed(config.seed, "shuffle");
  auto fit = minimize(objective,
                      quantile_start(train_values, config.k_bins, lower, upper).flat(),
                      split.train,
                      split.val,
                      fs);

  MarginalFit out{ MarginalFlowModel(
                     RawSplineParamsd::from_flat(fit.params, lower, upper),
                     std::move(column_id)),
                   std::move(fit.trace) };
  for (Eigen::Index i = 0; i < samples.size(); ++i)
    if (samples(i) < lower || samples(i) > upper)
      ++out.model.saturation_count;
  return out;
}

double
cdf(const MarginalFlowModel& model, double x, Diagnostics* diag)
{
  const auto ev = rq_inverse(model.spline(), x);
  if (diag && ev.clamped)
    ++diag->saturated;
  return ev.value;
}

double
quantile(const MarginalFlowModel& model, double u)
{
  if (!(u >= 0.0 && u <= 1.0))
    throw ArgumentError("quantile level must lie in [0, 1]");
  return rq_forward(model.spline(), u).value;
}

double
logpdf(const MarginalFlowModel& model, double x, Diagnostics* diag)
{
  const auto ev = rq_inverse(model.spline(), x);
  if (diag && ev.clamped)
    ++diag->saturated;
  return ev.log_deriv;
}

Eigen::VectorXd
cdf(const MarginalFlowModel& model, const Eigen::VectorXd& x)
{
  return x.unaryExpr([&](double v) { return cdf(model, v); });
}

Eigen::VectorXd
quantile(const MarginalFlowModel& model, const Eigen::VectorXd& u)
{
  return u.unaryExpr([&](double v) { return quantile(model, v); });
}

} // namespace copulaflow
