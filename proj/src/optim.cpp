#include "copulaflow/optim.hpp"
#include "copulaflow/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace copulaflow {

Eigen::Index
ParamVector::add_block(std::string name, const Eigen::VectorXd& init)
{
  for (const auto& b : layout_)
    if (b.name == name)
      throw ConfigError("duplicate parameter block '" + name + "'");
  const Eigen::Index offset = values_.size();
  Eigen::VectorXd grown(offset + init.size());
  grown << values_, init;
  values_ = std::move(grown);
  layout_.push_back({ std::move(name), offset, init.size() });
  return offset;
}

const ParamBlock&
ParamVector::block(std::string_view name) const
{
  for (const auto& b : layout_)
    if (b.name == name)
      return b;
  throw ArgumentError("unknown parameter block '" + std::string(name) + "'");
}

void
ParamVector::check() const
{
  Eigen::Index next = 0;
  for (const auto& b : layout_) {
    if (b.offset != next || b.size < 0)
      throw ParameterError("parameter layout is not contiguous at '" + b.name +
                           "'");
    next += b.size;
  }
  if (next != values_.size())
    throw ParameterError("parameter layout does not cover the vector");
  if (!values_.allFinite())
    throw ParameterError("parameter vector has non-finite entries");
}

void
optimizer_step(Eigen::VectorXd& params,
               const Eigen::VectorXd& grad,
               OptimizerState& state,
               double learning_rate,
               const AdamSettings& settings)
{
  if (grad.size() != params.size() ||
      state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size())
    throw ConfigError("optimizer shapes disagree");
  if (!grad.allFinite())
    throw TrainingError("non-finite gradient; optimizer step aborted");

  double scale = 1.0;
  if (settings.clip_norm > 0.0) {
    const double norm = grad.norm();
    if (norm > settings.clip_norm)
      scale = settings.clip_norm / norm;
  }
  ++state.step_count;
  const double b1 = settings.beta1, b2 = settings.beta2;
  state.first_moment = b1 * state.first_moment + (1.0 - b1) * scale * grad;
  state.second_moment =
    b2 * state.second_moment +
    (1.0 - b2) * (scale * grad).cwiseAbs2();
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  params.array() -=
    learning_rate * (state.first_moment.array() / c1) /
    ((state.second_moment.array() / c2).sqrt() + settings.epsilon);
}

LossAndGrad
value_and_grad(const Objective& objective,
               const Eigen::VectorXd& params,
               RowIndices rows,
               long batch_index)
{
  LossAndGrad out;
  out.value = objective.value_and_grad(params, rows, out.grad);
  if (!std::isfinite(out.value) || !out.grad.allFinite())
    throw TrainingError("non-finite loss or gradient in batch " +
                          std::to_string(batch_index),
                        batch_index);
  return out;
}

std::vector<Eigen::Index>
all_rows(Eigen::Index n)
{
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Eigen::Index{ 0 });
  return rows;
}

Holdout
holdout_split(Eigen::Index n, double fraction, std::uint64_t seed)
{
  if (!(fraction >= 0.0 && fraction < 1.0))
    throw ConfigError("validation fraction must lie in [0, 1)");
  auto rows = all_rows(n);
  Rng rng(seed);
  std::shuffle(rows.begin(), rows.end(), rng.engine());
  Eigen::Index n_val = static_cast<Eigen::Index>(std::llround(fraction * n));
  if (fraction > 0.0 && n > 1)
    n_val = std::clamp<Eigen::Index>(n_val, 1, n - 1);
  Holdout h;
  h.val.assign(rows.begin(), rows.begin() + n_val);
  h.train.assign(rows.begin() + n_val, rows.end());
  std::sort(h.val.begin(), h.val.end());
  std::sort(h.train.begin(), h.train.end());
  return h;
}

FitResult
minimize(const Objective& objective,
         Eigen::VectorXd initial,
         RowIndices train_rows,
         RowIndices val_rows,
         const FitSettings& settings)
{
  if (settings.epochs < 0 || settings.batch_size < 1 ||
      !(settings.learning_rate > 0.0))
    throw ConfigError("epochs, batch size and learning rate must be positive");
  if (train_rows.empty())
    throw DataError("no training rows");

  const RowIndices select = val_rows.empty() ? train_rows : val_rows;
  auto validate = [&](const Eigen::VectorXd& p) {
    const double v = objective.value(p, select);
    if (!std::isfinite(v))
      throw TrainingError("non-finite validation loss");
    return v;
  };

  FitResult result;
  Eigen::VectorXd params = std::move(initial);
  result.initial_val_nll = validate(params);
  result.best_val_nll = result.initial_val_nll;
  result.params = params;
  result.trace.push_back(
    { 0, objective.value(params, train_rows), result.initial_val_nll });

  OptimizerState state(params.size());
  Rng rng(settings.seed);
  std::vector<Eigen::Index> order(train_rows.begin(), train_rows.end());
  const Eigen::Index n = static_cast<Eigen::Index>(order.size());
  long batch_counter = 0;
  int since_best = 0;

  for (int epoch = 1; epoch <= settings.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double loss_sum = 0.0;
    Eigen::Index seen = 0;
    for (Eigen::Index begin = 0; begin < n; begin += settings.batch_size) {
      const Eigen::Index len = std::min(settings.batch_size, n - begin);
      const RowIndices batch(order.data() + begin, static_cast<std::size_t>(len));
      auto lg = value_and_grad(objective, params, batch, batch_counter);
      try {
        optimizer_step(params, lg.grad, state, settings.learning_rate,
                       settings.adam);
      } catch (const TrainingError& e) {
        throw TrainingError(e.what(), batch_counter);
      }
      ++batch_counter;
      loss_sum += lg.value * static_cast<double>(len);
      seen += len;
    }
    const double val = validate(params);
    result.trace.push_back(
      { epoch, loss_sum / static_cast<double>(std::max<Eigen::Index>(seen, 1)), val });
    if (val < result.best_val_nll) {
      result.best_val_nll = val;
      result.best_epoch = epoch;
      result.params = params;
      since_best = 0;
    } else if (++since_best >= settings.patience) {
      break;
    }
  }
  return result;
}

void
write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace)
{
  out << "epoch,train_nll,val_nll\n";
  out.precision(17);
  for (const auto& r : trace)
    out << r.epoch << ',' << r.train_nll << ',' << r.val_nll << '\n';
}

} // namespace copulaflow
