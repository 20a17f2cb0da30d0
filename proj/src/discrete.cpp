#include "copulaflow/discrete.hpp"
#include "copulaflow/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

namespace copulaflow {

CategoryCodec::CategoryCodec(std::vector<std::string> classes, bool ordinal)
  : classes_(std::move(classes))
  , ordinal_(ordinal)
{
  if (classes_.size() < 2)
    throw DegenerateDataError(
      "a discrete column needs at least two classes; model it as a constant");
  values_.reserve(classes_.size());
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (!index_.emplace(classes_[i], static_cast<int>(i)).second)
      throw DataError("duplicate class label '" + classes_[i] + "'");
    values_.push_back(ordinal_ ? std::stod(classes_[i]) : static_cast<double>(i));
  }
}

int
CategoryCodec::encode(std::string_view label) const
{
  const std::string key = ordinal_ ? canonical_ordinal(label) : std::string(label);
  const auto it = index_.find(key);
  if (it == index_.end())
    throw DataError("label '" + std::string(label) + "' is not a known class");
  return it->second;
}

const std::string&
CategoryCodec::decode(int code) const
{
  if (code < 0 || code >= n_classes())
    throw ArgumentError("code " + std::to_string(code) + " outside codec range");
  return classes_[static_cast<std::size_t>(code)];
}

double
CategoryCodec::numeric_value(int code) const
{
  if (code < 0 || code >= n_classes())
    throw ArgumentError("code " + std::to_string(code) + " outside codec range");
  return values_[static_cast<std::size_t>(code)];
}

std::string
canonical_ordinal(std::string_view label)
{
  std::string_view s = label;
  while (!s.empty() && s.front() == ' ')
    s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ')
    s.remove_suffix(1);
  if (!s.empty() && s.front() == '+')
    s.remove_prefix(1);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw DataError("ordinal value '" + std::string(label) +
                    "' is not an integer");
  return std::to_string(v);
}

CategoryCodec
build_codec(std::span<const std::string> labels, bool ordinal)
{
  std::vector<std::string> classes;
  if (ordinal) {
    std::set<long long> seen;
    for (const auto& l : labels)
      seen.insert(std::stoll(canonical_ordinal(l)));
    for (long long v : seen)
      classes.push_back(std::to_string(v));
  } else {
    const std::set<std::string> seen(labels.begin(), labels.end());
    classes.assign(seen.begin(), seen.end());
  }
  return CategoryCodec(std::move(classes), ordinal);
}

Eigen::Index
default_discrete_bins(int n_classes)
{
  return std::max<Eigen::Index>(4 * static_cast<Eigen::Index>(n_classes), 32);
}

namespace {

Eigen::VectorXd
cell_edges(const NormalizedSplined& sp, int n)
{
  Eigen::VectorXd e(n + 1);
  e(0) = 0.0;
  for (int k = 1; k < n; ++k)
    e(k) = rq_inverse(sp, static_cast<double>(k - 1)).value;
  e(n) = 1.0;
  return e;
}

} // namespace

DiscreteMarginalFlow::DiscreteMarginalFlow(CategoryCodec codec,
                                           RawSplineParamsd latent,
                                           std::string column_id)
  : codec_(std::move(codec))
  , latent_(std::move(latent))
  , spline_(normalize_params(latent_))
  , column_id_(std::move(column_id))
{
  const double n = static_cast<double>(codec_.n_classes());
  if (latent_.lower != -1.0 || latent_.upper != n - 1.0)
    throw ConfigError("latent spline bounds must be (-1, n_classes - 1)");
  edges_ = cell_edges(spline_, codec_.n_classes());
}

DiscreteMarginalFlow
DiscreteMarginalFlow::uniform(CategoryCodec codec,
                              Eigen::Index bins,
                              std::string column_id)
{
  const double n = static_cast<double>(codec.n_classes());
  auto raw = RawSplineParamsd::zeros(bins, -1.0, n - 1.0);
  return DiscreteMarginalFlow(std::move(codec), std::move(raw), std::move(column_id));
}

double
pmf(const DiscreteMarginalFlow& model, int k)
{
  if (k < 0 || k >= model.n_classes())
    throw ArgumentError("class " + std::to_string(k) + " outside 0.." +
                        std::to_string(model.n_classes() - 1));
  return model.edges()(k + 1) - model.edges()(k);
}

int
sample_code(const DiscreteMarginalFlow& model, double u)
{
  const int n = model.n_classes();
  const auto& e = model.edges();
  const double x = rq_forward(model.spline(), u).value;
  int k = std::clamp(static_cast<int>(std::ceil(x)), 0, n - 1);
  // Align with the cell edges so that ceil and the CDF cells agree exactly.
  while (k > 0 && u <= e(k))
    --k;
  while (k < n - 1 && u > e(k + 1))
    ++k;
  return k;
}

double
dist_transform(const DiscreteMarginalFlow& model, int k, double v)
{
  if (!(v >= 0.0 && v <= 1.0))
    throw ArgumentError("auxiliary uniform must lie in [0, 1]");
  const double p = pmf(model, k);
  const double lo = model.edges()(k);
  const double hi = model.edges()(k + 1);
  double u = std::clamp(lo + v * p, lo, hi);
  if (v > 0.0 && u <= lo)
    u = std::nextafter(lo, 2.0);
  return u;
}

DiscreteNll::DiscreteNll(Eigen::VectorXi codes, int n_classes)
  : codes_(std::move(codes))
  , n_classes_(n_classes)
{}

Eigen::VectorXd
DiscreteNll::counts(RowIndices rows) const
{
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n_classes_);
  for (const Eigen::Index r : rows)
    c(codes_(r)) += 1.0;
  return c;
}

double
DiscreteNll::value(const Eigen::VectorXd& params, RowIndices rows) const
{
  const double n = static_cast<double>(n_classes_);
  const auto sp =
    normalize_params(RawSplineParamsd::from_flat(params, -1.0, n - 1.0));
  const Eigen::VectorXd e = cell_edges(sp, n_classes_);
  const Eigen::VectorXd c = counts(rows);
  double loss = 0.0;
  for (int k = 0; k < n_classes_; ++k)
    if (c(k) > 0)
      loss -= c(k) * std::log(e(k + 1) - e(k));
  return loss / static_cast<double>(rows.size());
}

double
DiscreteNll::value_and_grad(const Eigen::VectorXd& params,
                            RowIndices rows,
                            Eigen::VectorXd& grad) const
{
  const double n = static_cast<double>(n_classes_);
  const auto sp =
    normalize_params(RawSplineParamsd::from_flat(params, -1.0, n - 1.0));
  const double batch = static_cast<double>(rows.size());
  const Eigen::VectorXd c = counts(rows);

  SplineKnotGrad<double> kg(sp.bins());
  Eigen::VectorXd e(n_classes_ + 1);
  std::vector<SplinePointGrad<double>> pg(static_cast<std::size_t>(n_classes_ + 1));
  e(0) = 0.0;
  e(n_classes_) = 1.0;
  for (int j = 1; j < n_classes_; ++j) {
    pg[static_cast<std::size_t>(j)] =
      rq_point_grad(sp, static_cast<double>(j - 1), SplineDirection::inverse);
    e(j) = pg[static_cast<std::size_t>(j)].value;
  }
  double loss = 0.0;
  Eigen::VectorXd ratio = Eigen::VectorXd::Zero(n_classes_);
  for (int k = 0; k < n_classes_; ++k) {
    const double p = e(k + 1) - e(k);
    if (c(k) > 0) {
      loss -= c(k) * std::log(p);
      ratio(k) = c(k) / p;
    }
  }
  // Edge j is the upper edge of class j-1 and the lower edge of class j.
  for (int j = 1; j < n_classes_; ++j) {
    const double w = -(ratio(j - 1) - ratio(j)) / batch;
    kg.accumulate(pg[static_cast<std::size_t>(j)], w, 0.0);
  }
  grad.resize(params.size());
  backprop_to_raw(sp, kg, grad);
  return loss / batch;
}

DiscreteFit
fit_discrete(const Eigen::VectorXi& codes,
             const CategoryCodec& codec,
             const DiscreteConfig& config,
             std::string column_id)
{
  const int n = codec.n_classes();
  if (codes.size() < 1)
    throw DataError("no codes to fit");
  if (codes.minCoeff() < 0 || codes.maxCoeff() >= n)
    throw DataError("codes outside 0.." + std::to_string(n - 1));
  if (codes.minCoeff() == codes.maxCoeff())
    throw DegenerateDataError("column '" + column_id +
                              "' has a single observed class; model it as a constant");
  const Eigen::Index bins =
    config.k_bins > 0 ? config.k_bins : default_discrete_bins(n);

  const DiscreteNll objective(codes, n);
  const auto split =
    holdout_split(codes.size(), config.val_fraction, derive_seed(config.seed, "val"));
  FitSettings fs;
  fs.epochs = config.epochs;
  fs.batch_size = config.batch_size;
  fs.learning_rate = config.learning_rate;
  fs.patience = config.patience;
  fs.seed = derive_seed(config.seed, "shuffle");
  const double upper = static_cast<double>(n) - 1.0;

  // Spread each class evenly over its cell so the start reproduces the
  // training frequencies.
  std::vector<int> counts(static_cast<std::size_t>(n), 0);
  for (const Eigen::Index r : split.train)
    ++counts[static_cast<std::size_t>(codes(r))];
  std::vector<double> spread;
  spread.reserve(split.train.size());
  for (int k = 0; k < n; ++k) {
    const int c = counts[static_cast<std::size_t>(k)];
    for (int j = 0; j < c; ++j)
      spread.push_back(k - 1.0 + (j + 0.5) / c);
  }
  auto fit = minimize(objective,
                      quantile_start(std::move(spread), bins, -1.0, upper).flat(),
                      split.train,
                      split.val,
                      fs);
  return { DiscreteMarginalFlow(codec,
                                RawSplineParamsd::from_flat(fit.params, -1.0, upper),
                                std::move(column_id)),
           std::move(fit.trace) };
}

} // namespace copulaflow
