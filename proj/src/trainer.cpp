#include "copulaflow/trainer.hpp"
#include "copulaflow/errors.hpp"
#include "copulaflow/parallel.hpp"
#include "copulaflow/random.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace copulaflow {

void
TrainConfig::validate() const
{
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0))
      throw ConfigError(std::string(what) + " must be positive");
  };
  if (marginal.k_bins < 2)
    throw ConfigError("marginal bins must be at least 2");
  if (discrete_bins != 0 && discrete_bins < 2)
    throw ConfigError("discrete bins must be 0 (automatic) or at least 2");
  if (copula.k_bins < 2)
    throw ConfigError("copula bins must be at least 2");
  if (marginal.epochs < 0 || copula.epochs < 0)
    throw ConfigError("epochs must be non-negative");
  if (marginal.patience < 1 || copula.patience < 1)
    throw ConfigError("patience must be at least 1");
  positive(static_cast<double>(marginal.batch_size), "marginal batch_size");
  positive(static_cast<double>(copula.batch_size), "copula batch_size");
  positive(marginal.learning_rate, "marginal learning_rate");
  positive(copula.learning_rate, "copula learning_rate");
  if (!(marginal.bound_margin >= 0.0))
    throw ConfigError("bound_margin must be non-negative");
  if (copula.n_layers < 1)
    throw ConfigError("copula layers must be at least 1");
  if (copula.hidden.empty())
    throw ConfigError("copula hidden sizes must not be empty");
  for (auto h : copula.hidden)
    if (h < 1)
      throw ConfigError("copula hidden sizes must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ConfigError("val_fraction must lie in (0, 1)");
}

namespace {

std::string
trim(const std::string& s)
{
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template<typename T>
T
parse_number(const std::string& text, const std::string& key)
{
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  return v;
}

std::vector<Eigen::Index>
parse_sizes(const std::string& text, const std::string& key)
{
  std::vector<Eigen::Index> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(parse_number<Eigen::Index>(trim(item), key));
  return out;
}

} // namespace

TrainConfig
parse_config(std::istream& in)
{
  TrainConfig c;
  std::string line, section;
  long number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#' || t.front() == ';')
      continue;
    const std::string where = "config line " + std::to_string(number) + ": ";
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError(where + "malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section != "marginal" && section != "copula" && section != "training")
        throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + "expected key = value");
    if (section.empty())
      throw ConfigError(where + "key outside a section");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const std::string full = section + "." + key;
    if (section == "marginal") {
      if (key == "bins")
        c.marginal.k_bins = parse_number<Eigen::Index>(value, full);
      else if (key == "discrete_bins")
        c.discrete_bins = parse_number<Eigen::Index>(value, full);
      else if (key == "epochs")
        c.marginal.epochs = parse_number<int>(value, full);
      else if (key == "batch_size")
        c.marginal.batch_size = parse_number<Eigen::Index>(value, full);
      else if (key == "learning_rate")
        c.marginal.learning_rate = parse_number<double>(value, full);
      else if (key == "patience")
        c.marginal.patience = parse_number<int>(value, full);
      else if (key == "bound_margin")
        c.marginal.bound_margin = parse_number<double>(value, full);
      else
        throw ConfigError(where + "unknown key '" + full + "'");
    } else if (section == "copula") {
      if (key == "bins")
        c.copula.k_bins = parse_number<Eigen::Index>(value, full);
      else if (key == "layers")
        c.copula.n_layers = parse_number<Eigen::Index>(value, full);
      else if (key == "hidden")
        c.copula.hidden = parse_sizes(value, full);
      else if (key == "epochs")
        c.copula.epochs = parse_number<int>(value, full);
      else if (key == "batch_size")
        c.copula.batch_size = parse_number<Eigen::Index>(value, full);
      else if (key == "learning_rate")
        c.copula.learning_rate = parse_number<double>(value, full);
      else if (key == "patience")
        c.copula.patience = parse_number<int>(value, full);
      else
        throw ConfigError(where + "unknown key '" + full + "'");
    } else {
      if (key == "seed")
        c.seed = parse_number<std::uint64_t>(value, full);
      else if (key == "val_fraction")
        c.val_fraction = parse_number<double>(value, full);
      else if (key == "cache_dir")
        c.cache_dir = value;
      else if (key == "cache_min_cells")
        c.cache_min_cells = parse_number<Eigen::Index>(value, full);
      else
        throw ConfigError(where + "unknown key '" + full + "'");
    }
  }
  c.validate();
  return c;
}

TrainConfig
load_config(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

void
write_config(std::ostream& out, const TrainConfig& c)
{
  const auto old = out.precision(17);
  out << "[marginal]\n"
      << "bins = " << c.marginal.k_bins << '\n'
      << "discrete_bins = " << c.discrete_bins << '\n'
      << "epochs = " << c.marginal.epochs << '\n'
      << "batch_size = " << c.marginal.batch_size << '\n'
      << "learning_rate = " << c.marginal.learning_rate << '\n'
      << "patience = " << c.marginal.patience << '\n'
      << "bound_margin = " << c.marginal.bound_margin << '\n'
      << "\n[copula]\n"
      << "bins = " << c.copula.k_bins << '\n'
      << "layers = " << c.copula.n_layers << '\n'
      << "hidden = ";
  for (std::size_t i = 0; i < c.copula.hidden.size(); ++i)
    out << (i ? "," : "") << c.copula.hidden[i];
  out << '\n'
      << "epochs = " << c.copula.epochs << '\n'
      << "batch_size = " << c.copula.batch_size << '\n'
      << "learning_rate = " << c.copula.learning_rate << '\n'
      << "patience = " << c.copula.patience << '\n'
      << "\n[training]\n"
      << "seed = " << c.seed << '\n'
      << "val_fraction = " << c.val_fraction << '\n';
  if (!c.cache_dir.empty())
    out << "cache_dir = " << c.cache_dir << '\n';
  out << "cache_min_cells = " << c.cache_min_cells << '\n';
  out.precision(old);
}

Codecs
FittedModel::codecs() const
{
  Codecs out(marginals.size());
  for (std::size_t j = 0; j < marginals.size(); ++j)
    if (const auto* d = std::get_if<DiscreteMarginalFlow>(&marginals[j]))
      out[j] = d->codec();
  return out;
}

namespace {

void
check_conforms(const FittedModel& model, const Dataset& data)
{
  if (!(data.schema == model.schema))
    throw DataError("data schema does not match the model schema");
  for (std::size_t j = 0; j < model.marginals.size(); ++j)
    if (const auto* d = std::get_if<DiscreteMarginalFlow>(&model.marginals[j]))
      if (!data.codecs[j] || !(*data.codecs[j] == d->codec()))
        throw DataError("column '" + model.schema.columns[j].name +
                        "' uses different categories than the model");
}

//! Writes the stage-2 matrix to disk and reads it back, so large runs keep a
//! reusable copy next to the model.
Eigen::MatrixXd
cache_uniforms(const Eigen::MatrixXd& u, const std::string& dir, std::uint64_t seed)
{
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/uniform-" + std::to_string(seed) + ".f64";
  std::string bytes(sizeof(std::int64_t) * 2 + sizeof(double) * static_cast<std::size_t>(u.size()), '\0');
  const std::int64_t shape[2] = { u.rows(), u.cols() };
  std::memcpy(bytes.data(), shape, sizeof(shape));
  std::memcpy(bytes.data() + sizeof(shape), u.data(), sizeof(double) * static_cast<std::size_t>(u.size()));
  write_file_atomic(path, bytes);

  std::ifstream in(path, std::ios::binary);
  std::int64_t back[2] = { 0, 0 };
  in.read(reinterpret_cast<char*>(back), sizeof(back));
  Eigen::MatrixXd out(back[0], back[1]);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(out.size())));
  if (!in || back[0] != u.rows() || back[1] != u.cols())
    throw IntegrityError("uniform-marginal cache '" + path + "' could not be read back");
  return out;
}

} // namespace

TrainResult
train_pipeline(const Dataset& data, const TrainConfig& config)
{
  config.validate();
  data.validate();
  const Eigen::Index d = data.cols();
  const auto& cols = data.schema.columns;

  TrainResult result;
  FittedModel& model = result.model;
  model.schema = data.schema;
  model.metadata.seed = config.seed;
  model.metadata.transform_seed = derive_seed(config.seed, "transform");
  model.metadata.config = config;

  // Stage 1: independent marginal fits.
  std::vector<std::optional<ColumnModel>> fitted(static_cast<std::size_t>(d));
  std::vector<std::vector<TraceRow>> traces(static_cast<std::size_t>(d));
  parallel_chunks(d, [&](Eigen::Index j) {
    const auto& spec = cols[static_cast<std::size_t>(j)];
    const std::uint64_t seed = derive_seed(config.seed, "marginal", static_cast<std::uint64_t>(j));
    try {
      if (spec.discrete()) {
        DiscreteConfig dc;
        dc.k_bins = config.discrete_bins;
        dc.epochs = config.marginal.epochs;
        dc.batch_size = config.marginal.batch_size;
        dc.learning_rate = config.marginal.learning_rate;
        dc.patience = config.marginal.patience;
        dc.val_fraction = config.val_fraction;
        dc.seed = seed;
        auto fit = fit_discrete(data.codes(j), *data.codecs[static_cast<std::size_t>(j)], dc, spec.name);
        fitted[static_cast<std::size_t>(j)] = std::move(fit.model);
        traces[static_cast<std::size_t>(j)] = std::move(fit.trace);
      } else {
        MarginalConfig mc = config.marginal;
        mc.val_fraction = config.val_fraction;
        mc.seed = seed;
        if (spec.bounds)
          mc.bounds = spec.bounds;
        auto fit = fit_marginal(data.values.col(j), mc, spec.name);
        fitted[static_cast<std::size_t>(j)] = std::move(fit.model);
        traces[static_cast<std::size_t>(j)] = std::move(fit.trace);
      }
    } catch (const TrainingError& e) {
      throw TrainingError("column '" + spec.name + "': " + e.what(), e.batch_index());
    }
  });
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto& name = cols[static_cast<std::size_t>(j)].name;
    auto& m = *fitted[static_cast<std::size_t>(j)];
    if (const auto* c = std::get_if<MarginalFlowModel>(&m); c && c->saturation_count > 0)
      result.warnings.push_back("column '" + name + "': " + std::to_string(c->saturation_count) +
                                " values lie outside the declared bounds and were clamped");
    model.marginals.push_back(std::move(m));
    result.traces.push_back({ name, std::move(traces[static_cast<std::size_t>(j)]) });
  }

  // Stage 2: copula on the uniform marginals.
  if (d >= 2) {
    Eigen::MatrixXd u = to_uniform(model, data, model.metadata.transform_seed);
    if (!config.cache_dir.empty() && u.size() >= config.cache_min_cells)
      u = cache_uniforms(u, config.cache_dir, config.seed);
    auto stack = build_copula_flow(d,
                                   config.copula.hidden,
                                   config.copula.k_bins,
                                   config.copula.n_layers,
                                   derive_seed(config.seed, "copula-init"));
    CopulaConfig cc = config.copula;
    cc.val_fraction = config.val_fraction;
    cc.seed = derive_seed(config.seed, "copula");
    auto fit = fit_copula(std::move(stack), u, cc);
    for (auto& w : fit.warnings)
      result.warnings.push_back(std::move(w));
    model.copula = std::move(fit.stack);
    result.traces.push_back({ "copula", std::move(fit.trace) });
  }
  return result;
}

Eigen::MatrixXd
to_uniform(const FittedModel& model,
           const Dataset& data,
           std::uint64_t seed,
           std::optional<double> fixed_v,
           long* saturated)
{
  check_conforms(model, data);
  const Eigen::Index n = data.rows(), d = data.cols();
  Eigen::MatrixXd u(n, d);
  Rng rng(derive_seed(seed, "dist-transform"));
  Diagnostics diag;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto& m = model.marginals[static_cast<std::size_t>(j)];
      if (const auto* c = std::get_if<MarginalFlowModel>(&m)) {
        u(i, j) = cdf(*c, data.values(i, j), &diag);
      } else {
        const double v = fixed_v ? *fixed_v : rng.uniform_open();
        u(i, j) = dist_transform(std::get<DiscreteMarginalFlow>(m),
                                 static_cast<int>(data.values(i, j)),
                                 v);
      }
    }
  }
  if (saturated)
    *saturated += diag.saturated;
  return u;
}

namespace {

//! Marginal log terms and the copula-space point of one row.
void
row_marginals(const FittedModel& model,
              const Eigen::RowVectorXd& row,
              Eigen::Ref<Eigen::VectorXd> terms,
              Eigen::Ref<Eigen::RowVectorXd> u,
              Diagnostics* diag)
{
  for (Eigen::Index j = 0; j < model.dim(); ++j) {
    const auto& m = model.marginals[static_cast<std::size_t>(j)];
    if (const auto* c = std::get_if<MarginalFlowModel>(&m)) {
      terms(j) = logpdf(*c, row(j), diag);
      u(j) = cdf(*c, row(j));
    } else {
      const auto& dm = std::get<DiscreteMarginalFlow>(m);
      const double code = row(j);
      if (code != std::floor(code) || code < 0 || code >= dm.n_classes())
        throw DataError("column '" + model.schema.columns[static_cast<std::size_t>(j)].name +
                        "': code outside the codec range");
      const int k = static_cast<int>(code);
      terms(j) = std::log(pmf(dm, k));
      u(j) = dist_transform(dm, k, 0.5);
    }
  }
}

} // namespace

JointTerms
joint_terms(const FittedModel& model, const Eigen::RowVectorXd& row)
{
  if (row.size() != model.dim())
    throw ArgumentError("row has " + std::to_string(row.size()) + " values, expected " +
                        std::to_string(model.dim()));
  JointTerms t;
  t.marginal.resize(model.dim());
  Eigen::RowVectorXd u(model.dim());
  row_marginals(model, row, t.marginal, u, nullptr);
  t.copula = model.copula ? copula_logdensity(*model.copula, Eigen::VectorXd(u.transpose())) : 0.0;
  t.total = t.copula + t.marginal.sum();
  return t;
}

double
joint_logdensity(const FittedModel& model, const Eigen::RowVectorXd& row)
{
  return joint_terms(model, row).total;
}

namespace {

struct BatchTerms
{
  Eigen::VectorXd copula;   // n
  Eigen::MatrixXd marginal; // n x d
  long saturated = 0;
};

BatchTerms
batch_terms(const FittedModel& model, const Dataset& data)
{
  check_conforms(model, data);
  const Eigen::Index n = data.rows(), d = data.cols();
  BatchTerms b;
  b.marginal.resize(n, d);
  Eigen::MatrixXd u(n, d);
  Diagnostics diag;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd terms(d);
    Eigen::RowVectorXd ui(d);
    row_marginals(model, data.values.row(i), terms, ui, &diag);
    b.marginal.row(i) = terms.transpose();
    u.row(i) = ui;
  }
  b.saturated = diag.saturated;
  if (model.copula) {
    auto t = copula_inverse(*model.copula, u);
    b.copula = std::move(t.logdet);
    b.saturated += t.saturated;
  } else {
    b.copula = Eigen::VectorXd::Zero(n);
  }
  return b;
}

} // namespace

Eigen::VectorXd
joint_logdensity(const FittedModel& model, const Dataset& data)
{
  const auto b = batch_terms(model, data);
  Eigen::VectorXd out(data.rows());
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    out(i) = b.copula(i) + b.marginal.row(i).sum();
  return out;
}

LoglikReport
loglik_report(const FittedModel& model, const Dataset& data)
{
  if (data.rows() < 1)
    throw DataError("likelihood report needs at least one row");
  const auto b = batch_terms(model, data);
  LoglikReport r;
  for (const auto& c : model.schema.columns)
    r.names.push_back(c.name);
  r.copula_term = b.copula.mean();
  r.marginal_terms = b.marginal.colwise().mean().transpose();
  r.total = r.copula_term + r.marginal_terms.sum();
  r.saturated = b.saturated;
  return r;
}

void
print_report(std::ostream& out, const LoglikReport& r)
{
  std::size_t width = 6;
  for (const auto& n : r.names)
    width = std::max(width, n.size() + 9);
  auto line = [&](const std::string& label, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << std::left << std::setw(static_cast<int>(width)) << label << "  " << buf << '\n';
  };
  out << "log-likelihood (nats/row)\n";
  line("total", r.total);
  line("copula", r.copula_term);
  for (std::size_t j = 0; j < r.names.size(); ++j)
    line("marginal " + r.names[j], r.marginal_terms(static_cast<Eigen::Index>(j)));
  if (r.saturated > 0)
    out << "warning: " << r.saturated << " values were clamped to the model bounds\n";
}

Dataset
generate(const FittedModel& model, Eigen::Index n_rows, std::uint64_t seed)
{
  if (n_rows < 0)
    throw ArgumentError("row count must be non-negative");
  const Eigen::Index d = model.dim();
  Rng rng(derive_seed(seed, "generate"));
  const Eigen::MatrixXd w = rng.uniform_matrix(n_rows, d);
  const Eigen::MatrixXd x = model.copula && n_rows > 0 ? copula_sample(*model.copula, w) : w;
  Dataset out;
  out.schema = model.schema;
  out.codecs = model.codecs();
  out.values.resize(n_rows, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto& m = model.marginals[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < n_rows; ++i) {
      if (const auto* c = std::get_if<MarginalFlowModel>(&m))
        out.values(i, j) = quantile(*c, x(i, j));
      else
        out.values(i, j) = sample_code(std::get<DiscreteMarginalFlow>(m), x(i, j));
    }
  }
  return out;
}

} // namespace copulaflow
