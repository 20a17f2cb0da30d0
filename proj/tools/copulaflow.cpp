// copulaflow: fit, sample, evaluate and inspect copula-flow models.

#include "copulaflow/benchmarks.hpp"
#include "copulaflow/errors.hpp"
#include "copulaflow/evaluation.hpp"
#include "copulaflow/model_io.hpp"
#include "copulaflow/random.hpp"
#include "copulaflow/trainer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace copulaflow;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

void
write_trace(const TrainResult& r, const std::string& path)
{
  std::ostringstream os;
  os << "stage,epoch,train_nll,val_nll\n";
  for (const auto& st : r.traces)
    for (const auto& row : st.trace)
      os << st.stage << ',' << row.epoch << ',' << format_double(row.train_nll) << ','
         << format_double(row.val_nll) << '\n';
  write_file_atomic(path, os.str());
}

struct FitArgs
{
  std::string data, schema, config, out, trace;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

int
cmd_fit(const FitArgs& a)
{
  const auto schema = load_schema(a.schema);
  auto config = a.config.empty() ? TrainConfig{} : load_config(a.config);
  if (a.seed_given)
    config.seed = a.seed;
  const auto data = load_csv(a.data, schema);

  const auto r = train_pipeline(data, config);
  for (const auto& st : r.traces) {
    const auto& last = st.trace.back();
    std::cerr << (st.stage == "copula" ? "stage 2: copula" : "stage 1: marginal '" + st.stage + "'") << ", "
              << st.trace.size() << " epochs, val nll " << last.val_nll << '\n';
  }
  for (const auto& w : r.warnings)
    std::cerr << "warning: " << w << '\n';

  save_model(r.model, a.out);
  write_trace(r, a.trace.empty() ? a.out + ".trace.csv" : a.trace);
  print_report(std::cout, loglik_report(r.model, data));
  return 0;
}

int
cmd_sample(const std::string& model_path, Eigen::Index n, std::uint64_t seed, const std::string& out)
{
  if (n < 0)
    throw ArgumentError("--n must be non-negative");
  save_csv(generate(load_model(model_path), n, seed), out);
  return 0;
}

int
cmd_eval(const std::string& model_path, const std::string& data_path, const std::string& target, std::uint64_t seed)
{
  const auto model = load_model(model_path);
  const auto codecs = model.codecs();
  const auto data = load_csv(data_path, model.schema, &codecs);
  print_report(std::cout, loglik_report(model, data));

  if (data.rows() >= 2) {
    const auto synth = generate(model, data.rows(), derive_seed(seed, "eval-sample"));
    const auto ks = column_ks(data, synth, derive_seed(seed, "eval-ks"));
    std::cout << "\ncolumn KS (model samples vs data)\n";
    for (std::size_t j = 0; j < ks.size(); ++j)
      std::cout << std::left << std::setw(16) << model.schema.columns[j].name << " D = " << std::setw(12)
                << ks[j].statistic << " p = " << ks[j].p_value << '\n';
  }

  if (!target.empty()) {
    const auto parts = split(data, { 0.7, 0.15, 0.15 }, derive_seed(seed, "eval-split"));
    const auto synth = generate(model, parts.train.rows(), derive_seed(seed, "eval-efficacy"));
    const auto e = ml_efficacy(parts.train, synth, parts.test, target);
    std::cout << "\nefficacy on '" << e.target << "' ("
              << (e.task == Task::regression ? "regression, R^2" : "classification, macro F1") << ")\n"
              << "  real  " << e.real.primary(e.task) << '\n'
              << "  synth " << e.synth.primary(e.task) << '\n'
              << "  gap   " << e.gap << '\n';
    if (e.task == Task::classification)
      std::cout << "  accuracy real " << e.real.accuracy << ", synth " << e.synth.accuracy << '\n';
  }
  return 0;
}

int
cmd_transform(const std::string& model_path, const std::string& data_path, const std::string& out, std::uint64_t seed)
{
  const auto model = load_model(model_path);
  const auto codecs = model.codecs();
  const auto data = load_csv(data_path, model.schema, &codecs);
  long saturated = 0;
  const Eigen::MatrixXd u = to_uniform(model, data, seed, std::nullopt, &saturated);

  std::ostringstream os;
  for (std::size_t j = 0; j < model.schema.columns.size(); ++j)
    os << (j ? "," : "") << model.schema.columns[j].name;
  os << '\n';
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    for (Eigen::Index j = 0; j < u.cols(); ++j)
      os << (j ? "," : "") << format_double(u(i, j));
    os << '\n';
  }
  write_file_atomic(out, os.str());
  if (saturated > 0)
    std::cerr << "warning: " << saturated << " cells fell outside the marginal bounds and were clamped\n";
  return 0;
}

int
cmd_bench(const std::string& name, Eigen::Index n, std::uint64_t seed, const std::string& out_dir)
{
  if (n < 0)
    throw ArgumentError("--n must be non-negative");
  Eigen::MatrixXd raw;
  std::string schema_text, description;
  if (name == "two-rings") {
    raw = gen_two_rings(n, seed);
    schema_text = "x1,continuous\nx2,continuous\n";
    description = "two concentric rings, radii 1 and 2, radial noise 0.1";
  } else if (name == "mixed-vine") {
    raw = gen_mixed_vine(n, seed);
    schema_text = "x1,continuous\nx2,ordinal\nx3,continuous\n";
    description = "D-vine x1 - x2 - x3: half-normal, hypergeometric(20, 7, 12), Gamma(2, 1); "
                  "Gaussian(0.7), Clayton(2), Gumbel(2) pair copulas";
  } else if (name.rfind("copula:", 0) == 0) {
    const auto rest = name.substr(7);
    const auto colon = rest.find(':');
    if (colon == std::string::npos)
      throw ArgumentError("expected copula:FAMILY:PARAM, got '" + name + "'");
    CopulaSpec spec{ parse_family(rest.substr(0, colon)), 0.0 };
    try {
      std::size_t used = 0;
      spec.parameter = std::stod(rest.substr(colon + 1), &used);
      if (used != rest.size() - colon - 1)
        throw std::invalid_argument("trailing text");
    } catch (const std::logic_error&) {
      throw ArgumentError("invalid copula parameter in '" + name + "'");
    }
    spec.validate();
    raw = sample_bivariate_copula(spec, n, seed);
    schema_text = "u1,continuous,0,1\nu2,continuous,0,1\n";
    std::ostringstream d;
    d << family_name(spec.family) << " copula, parameter " << spec.parameter << ", Kendall tau " << kendall_tau(spec);
    description = d.str();
  } else {
    throw ArgumentError("unknown benchmark '" + name + "' (two-rings, mixed-vine, copula:FAMILY:PARAM)");
  }

  std::istringstream in(schema_text);
  const auto schema = parse_schema(in);
  std::filesystem::create_directories(out_dir);
  save_schema(schema, out_dir + "/schema.txt");
  save_csv(dataset_from_matrix(schema, raw), out_dir + "/data.csv");
  std::cout << name << ": " << description << '\n' << n << " rows written to " << out_dir << "/data.csv\n";
  return 0;
}

int
cmd_plot(const std::string& model_path, const std::string& data_path, const std::string& out, std::uint64_t seed)
{
  const auto model = load_model(model_path);
  const auto codecs = model.codecs();
  const auto data = load_csv(data_path, model.schema, &codecs);
  if (data.rows() == 0)
    throw DataError("'" + data_path + "' has no rows to plot");
  const auto s = emit_plots(data, generate(model, data.rows(), seed), out);
  std::cout << s.pair_files.size() << " pair plots and " << s.marginal_files.size() << " marginal plots written to "
            << out << '\n';
  return 0;
}

} // namespace

int
main(int argc, char** argv)
{
  CLI::App app{ "Copula-flow density estimation and synthetic tabular data" };
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit marginals and copula, write the model and a trace CSV");
  fit_cmd->add_option("--data", fit.data, "Training CSV")->required();
  fit_cmd->add_option("--schema", fit.schema, "Schema file")->required();
  fit_cmd->add_option("--config", fit.config, "Training config (INI)");
  fit_cmd->add_option("--out", fit.out, "Model file to write")->required();
  fit_cmd->add_option("--trace", fit.trace, "Trace CSV (default: MODEL.trace.csv)");
  auto* fit_seed = fit_cmd->add_option("--seed", fit.seed, "Seed (overrides the config)");

  std::string model, data, out, target, name;
  Eigen::Index n = 0;
  std::uint64_t seed = 0;

  auto* sample_cmd = app.add_subcommand("sample", "Generate synthetic rows");
  sample_cmd->add_option("--model", model)->required();
  sample_cmd->add_option("--n", n)->required();
  sample_cmd->add_option("--seed", seed);
  sample_cmd->add_option("--out", out)->required();

  auto* eval_cmd = app.add_subcommand("eval", "Log-likelihood decomposition, column KS, optional efficacy");
  eval_cmd->add_option("--model", model)->required();
  eval_cmd->add_option("--data", data)->required();
  eval_cmd->add_option("--target", target, "Column to predict for the efficacy comparison");
  eval_cmd->add_option("--seed", seed);

  auto* transform_cmd = app.add_subcommand("transform", "Write the uniform marginals of a dataset");
  transform_cmd->add_option("--model", model)->required();
  transform_cmd->add_option("--data", data)->required();
  transform_cmd->add_option("--out", out)->required();
  transform_cmd->add_option("--seed", seed);

  auto* bench_cmd = app.add_subcommand("bench", "Write a benchmark dataset and its schema");
  bench_cmd->add_option("--name", name, "two-rings, mixed-vine or copula:FAMILY:PARAM")->required();
  bench_cmd->add_option("--n", n)->required();
  bench_cmd->add_option("--seed", seed);
  bench_cmd->add_option("--out-dir", out)->required();

  auto* plot_cmd = app.add_subcommand("plot", "Pair scatter plots and marginal histograms, real against synthetic");
  plot_cmd->add_option("--model", model)->required();
  plot_cmd->add_option("--data", data)->required();
  plot_cmd->add_option("--out", out)->required();
  plot_cmd->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*fit_cmd) {
      fit.seed_given = fit_seed->count() > 0;
      return cmd_fit(fit);
    }
    if (*sample_cmd)
      return cmd_sample(model, n, seed, out);
    if (*eval_cmd)
      return cmd_eval(model, data, target, seed);
    if (*transform_cmd)
      return cmd_transform(model, data, out, seed);
    if (*bench_cmd)
      return cmd_bench(name, n, seed, out);
    if (*plot_cmd)
      return cmd_plot(model, data, out, seed);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const IntegrityError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const VersionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitUsage;
}
