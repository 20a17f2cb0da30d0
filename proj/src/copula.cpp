#include "copulaflow/copula.hpp"
#include "copulaflow/random.hpp"

#include <algorithm>
#include <cmath>

namespace copulaflow {

namespace {

NormalizedSplined
dim_spline(const Eigen::MatrixXd& params, Eigen::Index col, Eigen::Index dim, Eigen::Index p)
{
  return normalize_params(
    RawSplineParamsd::from_flat(params.col(col).segment(dim * p, p), 0.0, 1.0));
}

double
clamp_unit(double v)
{
  return std::clamp(v, kCopulaEpsilon, 1.0 - kCopulaEpsilon);
}

struct LayerTape
{
  Eigen::MatrixXd input; // clamped, d x B
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> clamped;
  MaskedConditioner::Cache cache;
  std::vector<NormalizedSplined> splines; // column-major (dim fastest)
};

// Inverse pass of one layer over a d x B batch. Returns the outputs and adds
// the log-derivatives into `logdet`.
Eigen::MatrixXd
layer_inverse(const CopulaFlowLayer& layer,
              const Eigen::MatrixXd& x,
              Eigen::Ref<Eigen::VectorXd> logdet,
              long& saturated,
              LayerTape* tape)
{
  const Eigen::Index d = x.rows(), n = x.cols();
  const Eigen::Index p = 3 * layer.k_bins + 1;
  Eigen::MatrixXd z = x.unaryExpr(&clamp_unit);
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> clamped = (z.array() != x.array());
  saturated += clamped.count();
  const Eigen::MatrixXd params =
    layer.conditioner.forward(z, tape ? &tape->cache : nullptr);
  Eigen::MatrixXd out(d, n);
  if (tape)
    tape->splines.reserve(static_cast<std::size_t>(d * n));
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index i = 0; i < d; ++i) {
      auto sp = dim_spline(params, b, i, p);
      const auto ev = rq_inverse(sp, z(i, b));
      out(i, b) = ev.value;
      logdet(b) += ev.log_deriv;
      if (tape)
        tape->splines.push_back(std::move(sp));
    }
  }
  if (tape) {
    tape->input = std::move(z);
    tape->clamped = std::move(clamped);
  }
  return out;
}

} // namespace

Eigen::Index
CopulaFlowStack::parameter_count() const
{
  Eigen::Index n = 0;
  for (const auto& l : layers)
    n += l.conditioner.parameter_count();
  return n;
}

ParamVector
CopulaFlowStack::parameter_vector() const
{
  ParamVector pv;
  for (std::size_t i = 0; i < layers.size(); ++i)
    pv.add_block("layer" + std::to_string(i), layers[i].conditioner.parameters());
  return pv;
}

void
CopulaFlowStack::set_parameters(const Eigen::Ref<const Eigen::VectorXd>& flat)
{
  if (flat.size() != parameter_count())
    throw ArgumentError("copula parameter vector has wrong size");
  Eigen::Index o = 0;
  for (auto& l : layers) {
    const Eigen::Index c = l.conditioner.parameter_count();
    l.conditioner.set_parameters(flat.segment(o, c));
    o += c;
  }
}

CopulaFlowStack
build_copula_flow(Eigen::Index dim,
                  const std::vector<Eigen::Index>& hidden,
                  Eigen::Index k_bins,
                  Eigen::Index n_layers,
                  std::uint64_t seed)
{
  if (dim < 2)
    throw ConfigError("copula flow needs at least two dimensions");
  if (k_bins < 2)
    throw ConfigError("copula spline needs at least 2 bins");
  if (n_layers < 1)
    throw ConfigError("copula flow needs at least one layer");
  CopulaFlowStack stack;
  stack.dim = dim;
  stack.k_bins = k_bins;
  stack.hidden = hidden;
  for (Eigen::Index l = 0; l < n_layers; ++l) {
    std::vector<Eigen::Index> ordering(static_cast<std::size_t>(dim));
    for (Eigen::Index t = 0; t < dim; ++t)
      ordering[static_cast<std::size_t>(t)] = (l % 2 == 0) ? t : dim - 1 - t;
    stack.layers.push_back(
      { MaskedConditioner(dim,
                          hidden,
                          stack.params_per_dim(),
                          std::move(ordering),
                          derive_seed(seed, "copula-layer", static_cast<std::uint64_t>(l))),
        k_bins });
  }
  return stack;
}

CopulaTransform
copula_inverse(const CopulaFlowStack& stack, const Eigen::MatrixXd& u_x)
{
  if (u_x.cols() != stack.dim)
    throw ArgumentError("copula input has " + std::to_string(u_x.cols()) +
                        " columns, expected " + std::to_string(stack.dim));
  CopulaTransform out;
  out.logdet = Eigen::VectorXd::Zero(u_x.rows());
  Eigen::MatrixXd x = u_x.transpose();
  for (auto it = stack.layers.rbegin(); it != stack.layers.rend(); ++it)
    x = layer_inverse(*it, x, out.logdet, out.saturated, nullptr);
  out.u = x.transpose();
  return out;
}

Eigen::VectorXd
copula_logdensity(const CopulaFlowStack& stack, const Eigen::MatrixXd& u_x)
{
  return copula_inverse(stack, u_x).logdet;
}

double
copula_logdensity(const CopulaFlowStack& stack, const Eigen::VectorXd& row)
{
  return copula_inverse(stack, row.transpose()).logdet(0);
}

Eigen::MatrixXd
copula_sample(const CopulaFlowStack& stack, const Eigen::MatrixXd& u)
{
  if (u.cols() != stack.dim)
    throw ArgumentError("uniform input has wrong number of columns");
  const Eigen::Index d = stack.dim, n = u.rows();
  const Eigen::Index p = stack.params_per_dim();
  Eigen::MatrixXd z = u.transpose();
  for (const auto& layer : stack.layers) {
    Eigen::MatrixXd y = Eigen::MatrixXd::Constant(d, n, 0.5);
    for (const Eigen::Index i : layer.ordering()) {
      const Eigen::MatrixXd params = layer.conditioner.forward(y);
      for (Eigen::Index b = 0; b < n; ++b) {
        const auto sp = dim_spline(params, b, i, p);
        y(i, b) = clamp_unit(rq_forward(sp, z(i, b)).value);
      }
    }
    z = std::move(y);
  }
  return z.transpose();
}

Eigen::MatrixXd
layer_spline_params(const CopulaFlowLayer& layer, const Eigen::VectorXd& input)
{
  const Eigen::MatrixXd out =
    layer.conditioner.forward(input.unaryExpr(&clamp_unit));
  const Eigen::Index d = layer.conditioner.input_dim();
  const Eigen::Index p = layer.conditioner.params_per_dim();
  Eigen::MatrixXd m(d, p);
  for (Eigen::Index i = 0; i < d; ++i)
    m.row(i) = out.col(0).segment(i * p, p).transpose();
  return m;
}

CopulaNll::CopulaNll(CopulaFlowStack architecture, const Eigen::MatrixXd& u_data)
  : stack_(std::move(architecture))
  , data_(u_data.transpose())
{
  if (u_data.cols() != stack_.dim)
    throw ArgumentError("copula data has wrong number of columns");
}

double
CopulaNll::value(const Eigen::VectorXd& params, RowIndices rows) const
{
  CopulaFlowStack stack = stack_;
  stack.set_parameters(params);
  Eigen::MatrixXd x(stack.dim, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t b = 0; b < rows.size(); ++b)
    x.col(static_cast<Eigen::Index>(b)) = data_.col(rows[b]);
  return -copula_logdensity(stack, Eigen::MatrixXd(x.transpose())).mean();
}

double
CopulaNll::value_and_grad(const Eigen::VectorXd& params,
                          RowIndices rows,
                          Eigen::VectorXd& grad) const
{
  CopulaFlowStack stack = stack_;
  stack.set_parameters(params);
  const Eigen::Index d = stack.dim;
  const Eigen::Index p = stack.params_per_dim();
  const std::size_t n_layers = stack.layers.size();
  std::vector<Eigen::Index> offsets(n_layers);
  {
    Eigen::Index o = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
      offsets[l] = o;
      o += stack.layers[l].conditioner.parameter_count();
    }
  }

  const double total = reduce_rows(
    rows, params.size(), grad, [&](RowIndices chunk, Eigen::VectorXd& g) {
      const Eigen::Index n = static_cast<Eigen::Index>(chunk.size());
      Eigen::MatrixXd x(d, n);
      for (Eigen::Index b = 0; b < n; ++b)
        x.col(b) = data_.col(chunk[static_cast<std::size_t>(b)]);

      // Forward: tapes[m] belongs to the m-th applied layer (last layer first).
      std::vector<LayerTape> tapes(n_layers);
      Eigen::VectorXd logdet = Eigen::VectorXd::Zero(n);
      long saturated = 0;
      for (std::size_t m = 0; m < n_layers; ++m)
        x = layer_inverse(stack.layers[n_layers - 1 - m], x, logdet, saturated, &tapes[m]);

      // Backward with loss = -sum(logdet); the noise output carries no loss.
      const double gamma = -1.0;
      Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(d, n);
      SplineKnotGrad<double> kg(stack.k_bins);
      for (std::size_t m = n_layers; m-- > 0;) {
        const std::size_t l = n_layers - 1 - m;
        const auto& layer = stack.layers[l];
        auto& tape = tapes[m];
        Eigen::MatrixXd d_params(d * p, n);
        Eigen::MatrixXd adj_in(d, n);
        for (Eigen::Index b = 0; b < n; ++b) {
          for (Eigen::Index i = 0; i < d; ++i) {
            const auto& sp = tape.splines[static_cast<std::size_t>(b * d + i)];
            const auto pg =
              rq_point_grad(sp, tape.input(i, b), SplineDirection::inverse);
            kg.set_zero();
            kg.accumulate(pg, adj(i, b), gamma);
            backprop_to_raw(sp, kg, d_params.col(b).segment(i * p, p));
            adj_in(i, b) = adj(i, b) * pg.dvalue_dpoint + gamma * pg.dlog_dpoint;
          }
        }
        adj_in += layer.conditioner.backward(
          tape.cache,
          d_params,
          g.segment(offsets[l], layer.conditioner.parameter_count()));
        adj = tape.clamped.select(Eigen::MatrixXd::Zero(d, n), adj_in);
      }
      return -logdet.sum();
    },
    128);
  const double n = static_cast<double>(rows.size());
  grad /= n;
  return total / n;
}

CopulaFit
fit_copula(CopulaFlowStack stack,
           const Eigen::MatrixXd& u_data,
           const CopulaConfig& config)
{
  if (u_data.cols() != stack.dim)
    throw DataError("copula data has " + std::to_string(u_data.cols()) +
                    " columns, expected " + std::to_string(stack.dim));
  if (!u_data.allFinite())
    throw DataError("copula data contains NaN or infinite values");
  if (u_data.size() > 0 && (u_data.minCoeff() < 0.0 || u_data.maxCoeff() > 1.0))
    throw DataError("copula data must lie in [0, 1]");
  CopulaFit out;
  if (u_data.rows() < 100)
    out.warnings.push_back("copula fit on only " + std::to_string(u_data.rows()) +
                           " rows; the estimate will be unreliable");
  if (u_data.rows() < 2)
    throw DataError("copula fit needs at least two rows");

  const CopulaNll objective(stack, u_data);
  const auto split = holdout_split(
    u_data.rows(), config.val_fraction, derive_seed(config.seed, "copula-val"));
  FitSettings fs;
  fs.epochs = config.epochs;
  fs.batch_size = config.batch_size;
  fs.learning_rate = config.learning_rate;
  fs.patience = config.patience;
  fs.seed = derive_seed(config.seed, "copula-shuffle");
  auto fit = minimize(objective,
                      stack.parameter_vector().values(),
                      split.train,
                      split.val,
                      fs);
  stack.set_parameters(fit.params);
  out.stack = std::move(stack);
  out.trace = std::move(fit.trace);
  return out;
}

} // namespace copulaflow
