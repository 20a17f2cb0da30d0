#include "copulaflow/evaluation.hpp"
#include "copulaflow/errors.hpp"
#include "copulaflow/random.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

namespace copulaflow {

std::vector<KsResult>
marginal_uniformity_report(const FittedModel& model, const Dataset& data, std::uint64_t seed)
{
  const Eigen::MatrixXd u = to_uniform(model, data, derive_seed(seed, "uniformity-transform"));
  Rng rng(derive_seed(seed, "uniformity-reference"));
  std::vector<KsResult> out;
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    const Eigen::VectorXd ref = rng.uniform_matrix(u.rows(), 1);
    out.push_back(ks_two_sample(u.col(j), ref, derive_seed(seed, "uniformity-ks", static_cast<std::uint64_t>(j))));
  }
  return out;
}

namespace {

Eigen::VectorXd
numeric_column(const Dataset& d, Eigen::Index j)
{
  Eigen::VectorXd v(d.rows());
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    v(i) = d.numeric(i, j);
  return v;
}

} // namespace

std::vector<KsResult>
column_ks(const Dataset& a, const Dataset& b, std::uint64_t seed)
{
  if (!(a.schema == b.schema))
    throw DataError("datasets have different schemas");
  std::vector<KsResult> out;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    out.push_back(ks_two_sample(numeric_column(a, j), numeric_column(b, j),
                                derive_seed(seed, "column-ks", static_cast<std::uint64_t>(j))));
  return out;
}

namespace {

//! Design matrix without intercept: numeric columns as is, categorical
//! columns one-hot without their first class.
Eigen::MatrixXd
features(const Dataset& d, Eigen::Index target)
{
  std::vector<Eigen::VectorXd> cols;
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    if (j == target)
      continue;
    const auto& spec = d.schema.columns[static_cast<std::size_t>(j)];
    if (spec.kind == ColumnKind::categorical) {
      const int n = d.codecs[static_cast<std::size_t>(j)]->n_classes();
      for (int k = 1; k < n; ++k)
        cols.push_back((d.values.col(j).array() == k).cast<double>().matrix());
    } else {
      cols.push_back(numeric_column(d, j));
    }
  }
  Eigen::MatrixXd x(d.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c)
    x.col(static_cast<Eigen::Index>(c)) = cols[c];
  return x;
}

struct Standardizer
{
  Eigen::RowVectorXd mean, scale;

  explicit Standardizer(const Eigen::MatrixXd& x)
  {
    mean = x.colwise().mean();
    scale = ((x.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
    for (Eigen::Index j = 0; j < scale.size(); ++j)
      if (!(scale(j) > 0.0))
        scale(j) = 1.0;
  }

  //! Standardised features with a leading column of ones.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const
  {
    Eigen::MatrixXd out(x.rows(), x.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(x.cols()) = ((x.rowwise() - mean).array().rowwise() / scale.array()).matrix();
    return out;
  }
};

EfficacyMetrics
regression_arm(const Dataset& train, const Dataset& test, Eigen::Index target)
{
  const Standardizer st(features(train, target));
  const Eigen::MatrixXd x = st.apply(features(train, target));
  const Eigen::VectorXd y = train.values.col(target);
  const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd yt = test.values.col(target);
  const Eigen::VectorXd pred = st.apply(features(test, target)) * beta;
  const double ss_res = (yt - pred).squaredNorm();
  const double ss_tot = (yt.array() - yt.mean()).square().sum();
  EfficacyMetrics m;
  m.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
  return m;
}

EfficacyMetrics
classification_arm(const Dataset& train, const Dataset& test, Eigen::Index target, int n_classes)
{
  constexpr int iterations = 500;
  constexpr double l2 = 1e-3;
  constexpr double step = 0.5;

  const Standardizer st(features(train, target));
  const Eigen::MatrixXd x = st.apply(features(train, target));
  const Eigen::Index n = x.rows(), p = x.cols();
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, n_classes);
  for (Eigen::Index i = 0; i < n; ++i)
    onehot(i, static_cast<Eigen::Index>(train.values(i, target))) = 1.0;

  auto softmax_rows = [](Eigen::MatrixXd z) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      z.row(i).array() -= z.row(i).maxCoeff();
      z.row(i) = z.row(i).array().exp().matrix();
      z.row(i) /= z.row(i).sum();
    }
    return z;
  };
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(p, n_classes);
  for (int it = 0; it < iterations; ++it) {
    const Eigen::MatrixXd prob = softmax_rows(x * w);
    Eigen::MatrixXd grad = x.transpose() * (prob - onehot) / static_cast<double>(n);
    grad.bottomRows(p - 1) += l2 * w.bottomRows(p - 1);
    w -= step * grad;
  }

  const Eigen::MatrixXd scores = st.apply(features(test, target)) * w;
  std::vector<long> tp(static_cast<std::size_t>(n_classes), 0), fp = tp, fn = tp;
  std::set<int> labels;
  long correct = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index pred = 0;
    scores.row(i).maxCoeff(&pred);
    const int truth = static_cast<int>(test.values(i, target));
    labels.insert(truth);
    labels.insert(static_cast<int>(pred));
    if (pred == truth) {
      ++correct;
      ++tp[static_cast<std::size_t>(truth)];
    } else {
      ++fp[static_cast<std::size_t>(pred)];
      ++fn[static_cast<std::size_t>(truth)];
    }
  }
  EfficacyMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(std::max<Eigen::Index>(1, scores.rows()));
  double f1 = 0.0;
  for (int k : labels) {
    const double denom = 2.0 * tp[static_cast<std::size_t>(k)] + fp[static_cast<std::size_t>(k)] + fn[static_cast<std::size_t>(k)];
    f1 += denom > 0.0 ? 2.0 * tp[static_cast<std::size_t>(k)] / denom : 0.0;
  }
  m.f1_macro = labels.empty() ? 0.0 : f1 / static_cast<double>(labels.size());
  return m;
}

} // namespace

EfficacyResult
ml_efficacy(const Dataset& real_train,
            const Dataset& synth_train,
            const Dataset& real_test,
            const std::string& target)
{
  const Eigen::Index t = real_train.schema.index_of(target);
  if (t < 0)
    throw TaskError("unknown target column '" + target + "'");
  if (!(synth_train.schema == real_train.schema) || !(real_test.schema == real_train.schema))
    throw TaskError("efficacy datasets must share one schema");
  if (real_train.rows() < 2 || synth_train.rows() < 2 || real_test.rows() < 1)
    throw TaskError("efficacy needs at least two training rows per arm and one test row");
  const Eigen::VectorXd y = real_train.values.col(t);
  if (y.minCoeff() == y.maxCoeff())
    throw TaskError("target column '" + target + "' is constant");

  EfficacyResult r;
  r.target = target;
  const auto& spec = real_train.schema.columns[static_cast<std::size_t>(t)];
  if (spec.discrete()) {
    r.task = Task::classification;
    const int n = real_train.codecs[static_cast<std::size_t>(t)]->n_classes();
    r.real = classification_arm(real_train, real_test, t, n);
    r.synth = classification_arm(synth_train, real_test, t, n);
  } else {
    r.task = Task::regression;
    r.real = regression_arm(real_train, real_test, t);
    r.synth = regression_arm(synth_train, real_test, t);
  }
  r.gap = r.real.primary(r.task) - r.synth.primary(r.task);
  return r;
}

namespace {

std::string
xml_escape(const std::string& s)
{
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string
file_stem(const std::string& name)
{
  std::string out;
  for (unsigned char c : name)
    out += std::isalnum(c) || c == '-' ? static_cast<char>(c) : '_';
  return out;
}

struct Series
{
  std::string name;
  std::string color;
  Eigen::VectorXd x, y;
};

constexpr double kSize = 400.0;
constexpr double kPad = 40.0;
constexpr Eigen::Index kMaxSvgPoints = 2000;

std::string
render_scatter(const std::vector<Series>& series,
               const std::vector<PairFit>& fits,
               const std::string& x_label,
               const std::string& y_label)
{
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    if (s.x.size() == 0)
      continue;
    x0 = std::min(x0, s.x.minCoeff());
    x1 = std::max(x1, s.x.maxCoeff());
    y0 = std::min(y0, s.y.minCoeff());
    y1 = std::max(y1, s.y.maxCoeff());
  }
  if (!(x1 > x0)) { x0 -= 0.5; x1 = x0 + 1.0; }
  if (!(y1 > y0)) { y0 -= 0.5; y1 = y0 + 1.0; }
  const double w = kSize - 2 * kPad;
  auto sx = [&](double v) { return kPad + (v - x0) / (x1 - x0) * w; };
  auto sy = [&](double v) { return kSize - kPad - (v - y0) / (y1 - y0) * w; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize << "\">\n"
     << "<rect x=\"" << kPad << "\" y=\"" << kPad << "\" width=\"" << w << "\" height=\"" << w
     << "\" fill=\"none\" stroke=\"black\"/>\n"
     << "<text x=\"" << kSize / 2 << "\" y=\"" << kSize - 10 << "\" text-anchor=\"middle\">" << xml_escape(x_label) << "</text>\n"
     << "<text x=\"12\" y=\"" << kSize / 2 << "\" transform=\"rotate(-90 12 " << kSize / 2
     << ")\" text-anchor=\"middle\">" << xml_escape(y_label) << "</text>\n";
  for (const auto& s : series) {
    const Eigen::Index stride = std::max<Eigen::Index>(1, s.x.size() / kMaxSvgPoints);
    os << "<g fill=\"" << s.color << "\" fill-opacity=\"0.4\">\n";
    for (Eigen::Index i = 0; i < s.x.size(); i += stride)
      os << "<circle cx=\"" << sx(s.x(i)) << "\" cy=\"" << sy(s.y(i)) << "\" r=\"1.5\"/>\n";
    os << "</g>\n";
  }
  for (const auto& f : fits) {
    const auto it = std::find_if(series.begin(), series.end(), [&](const Series& s) { return s.name == f.set; });
    const std::string color = it == series.end() ? "black" : it->color;
    os << "<line x1=\"" << sx(x0) << "\" y1=\"" << sy(f.line.intercept + f.line.slope * x0) << "\" x2=\"" << sx(x1)
       << "\" y2=\"" << sy(f.line.intercept + f.line.slope * x1) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string
render_histogram(const Eigen::VectorXd& lower,
                 const Eigen::VectorXd& upper,
                 const Eigen::VectorXd& real,
                 const Eigen::VectorXd& synth,
                 const std::string& label)
{
  const double top = std::max(real.maxCoeff(), synth.maxCoeff()) * 1.05 + 1e-12;
  const double x0 = lower.minCoeff(), x1 = upper.maxCoeff();
  const double w = kSize - 2 * kPad;
  auto sx = [&](double v) { return kPad + (v - x0) / (x1 - x0) * w; };
  auto sy = [&](double v) { return kSize - kPad - v / top * w; };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize << "\">\n"
     << "<text x=\"" << kSize / 2 << "\" y=\"" << kSize - 10 << "\" text-anchor=\"middle\">" << xml_escape(label) << "</text>\n";
  for (Eigen::Index b = 0; b < lower.size(); ++b) {
    const double left = sx(lower(b)), width = sx(upper(b)) - left;
    os << "<rect x=\"" << left << "\" y=\"" << sy(real(b)) << "\" width=\"" << width << "\" height=\""
       << sy(0.0) - sy(real(b)) << "\" fill=\"steelblue\" fill-opacity=\"0.5\"/>\n"
       << "<rect x=\"" << left << "\" y=\"" << sy(synth(b)) << "\" width=\"" << width << "\" height=\""
       << sy(0.0) - sy(synth(b)) << "\" fill=\"darkorange\" fill-opacity=\"0.5\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

} // namespace

std::vector<PairFit>
emit_scatter(const Dataset& real,
             const Dataset* synth,
             const std::string& x_column,
             const std::string& y_column,
             const std::string& csv_path,
             const std::string& svg_path)
{
  const Eigen::Index xi = real.schema.index_of(x_column), yi = real.schema.index_of(y_column);
  if (xi < 0 || yi < 0)
    throw ArgumentError("unknown column '" + (xi < 0 ? x_column : y_column) + "'");
  if (synth && !(synth->schema == real.schema))
    throw DataError("synthetic data schema differs from the real data schema");

  std::vector<Series> series{ { "real", "steelblue", numeric_column(real, xi), numeric_column(real, yi) } };
  if (synth)
    series.push_back({ "synth", "darkorange", numeric_column(*synth, xi), numeric_column(*synth, yi) });

  std::ostringstream os;
  os << "x,y,set\n";
  std::vector<PairFit> fits;
  for (const auto& s : series) {
    for (Eigen::Index i = 0; i < s.x.size(); ++i)
      os << format_double(s.x(i)) << ',' << format_double(s.y(i)) << ',' << s.name << '\n';
    if (s.x.size() >= 2 && s.x.minCoeff() < s.x.maxCoeff())
      fits.push_back({ s.name, fit_line(s.x, s.y) });
  }
  write_file_atomic(csv_path, os.str());
  if (!svg_path.empty())
    write_file_atomic(svg_path, render_scatter(series, fits, x_column, y_column));
  return fits;
}

PlotSummary
emit_plots(const Dataset& real, const Dataset& synth, const std::string& dir)
{
  if (real.rows() == 0)
    throw DataError("no rows to plot");
  std::filesystem::create_directories(dir);
  PlotSummary summary;
  std::ostringstream fits_csv;
  fits_csv << "x,y,set,slope,intercept\n";
  const auto& cols = real.schema.columns;
  for (std::size_t a = 0; a < cols.size(); ++a) {
    for (std::size_t b = a + 1; b < cols.size(); ++b) {
      const std::string stem = dir + "/pair_" + file_stem(cols[a].name) + "__" + file_stem(cols[b].name);
      for (const auto& f : emit_scatter(real, &synth, cols[a].name, cols[b].name, stem + ".csv", stem + ".svg"))
        fits_csv << cols[a].name << ',' << cols[b].name << ',' << f.set << ',' << format_double(f.line.slope) << ','
                 << format_double(f.line.intercept) << '\n';
      summary.pair_files.push_back(stem + ".csv");
    }
  }
  write_file_atomic(dir + "/fits.csv", fits_csv.str());

  for (std::size_t j = 0; j < cols.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    const Eigen::VectorXd r = numeric_column(real, col);
    const Eigen::VectorXd s = numeric_column(synth, col);
    Eigen::VectorXd lower, upper;
    if (cols[j].discrete()) {
      const int n = real.codecs[j]->n_classes();
      lower.resize(n);
      upper.resize(n);
      for (int k = 0; k < n; ++k) {
        const double v = real.codecs[j]->numeric_value(k);
        lower(k) = v - 0.4;
        upper(k) = v + 0.4;
      }
    } else {
      double lo = r.minCoeff(), hi = r.maxCoeff();
      if (s.size() > 0) {
        lo = std::min(lo, s.minCoeff());
        hi = std::max(hi, s.maxCoeff());
      }
      if (!(hi > lo))
        hi = lo + 1.0;
      constexpr int bins = 30;
      lower = Eigen::VectorXd::LinSpaced(bins, lo, hi - (hi - lo) / bins);
      upper = lower.array() + (hi - lo) / bins;
    }
    auto histogram = [&](const Eigen::VectorXd& v) {
      Eigen::VectorXd h = Eigen::VectorXd::Zero(lower.size());
      for (Eigen::Index i = 0; i < v.size(); ++i)
        for (Eigen::Index b = 0; b < lower.size(); ++b)
          if (v(i) >= lower(b) && (v(i) < upper(b) || (b == lower.size() - 1 && v(i) <= upper(b)))) {
            h(b) += 1.0;
            break;
          }
      return v.size() > 0 ? Eigen::VectorXd(h / static_cast<double>(v.size())) : h;
    };
    const Eigen::VectorXd hr = histogram(r), hs = histogram(s);
    std::ostringstream os;
    os << "lower,upper,real,synth\n";
    for (Eigen::Index b = 0; b < lower.size(); ++b)
      os << format_double(lower(b)) << ',' << format_double(upper(b)) << ',' << format_double(hr(b)) << ','
         << format_double(hs(b)) << '\n';
    const std::string stem = dir + "/marginal_" + file_stem(cols[j].name);
    write_file_atomic(stem + ".csv", os.str());
    write_file_atomic(stem + ".svg", render_histogram(lower, upper, hr, hs, cols[j].name));
    summary.marginal_files.push_back(stem + ".csv");
  }
  return summary;
}

} // namespace copulaflow
