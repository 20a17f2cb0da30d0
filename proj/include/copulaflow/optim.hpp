#pragma once

// Value-and-gradient plumbing for the training losses: a named flat parameter
// registry, an adaptive-moment optimizer and a minibatch loop with early
// stopping on a validation split.

#include "copulaflow/errors.hpp"
#include "copulaflow/parallel.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace copulaflow {

using RowIndices = std::span<const Eigen::Index>;

struct ParamBlock
{
  std::string name;
  Eigen::Index offset;
  Eigen::Index size;
};

//! Flat parameter vector with an ordered registry of named blocks.
class ParamVector
{
public:
  //! Appends a block; returns its offset.
  Eigen::Index add_block(std::string name, const Eigen::VectorXd& init);

  Eigen::Index size() const { return values_.size(); }
  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }
  const std::vector<ParamBlock>& layout() const { return layout_; }
  const ParamBlock& block(std::string_view name) const;

  Eigen::VectorXd::SegmentReturnType segment(std::string_view name)
  {
    const auto& b = block(name);
    return values_.segment(b.offset, b.size);
  }
  Eigen::VectorXd::ConstSegmentReturnType segment(std::string_view name) const
  {
    const auto& b = block(name);
    return values_.segment(b.offset, b.size);
  }

  //! Throws ParameterError unless all values are finite and the blocks are
  //! disjoint and cover the vector.
  void check() const;

private:
  Eigen::VectorXd values_;
  std::vector<ParamBlock> layout_;
};

struct OptimizerState
{
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  long step_count = 0;

  explicit OptimizerState(Eigen::Index n = 0)
    : first_moment(Eigen::VectorXd::Zero(n))
    , second_moment(Eigen::VectorXd::Zero(n))
  {}
};

struct AdamSettings
{
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0; //!< global gradient-norm clip; <= 0 disables
};

//! One bias-corrected adaptive-moment update. A non-finite gradient aborts
//! the step (TrainingError) and leaves params and state untouched.
void
optimizer_step(Eigen::VectorXd& params,
               const Eigen::VectorXd& grad,
               OptimizerState& state,
               double learning_rate,
               const AdamSettings& settings = {});

//! A mean loss over selected rows of a fixed dataset.
class Objective
{
public:
  virtual ~Objective() = default;

  virtual Eigen::Index rows() const = 0;

  //! Returns the mean loss over `rows` and writes its gradient into `grad`
  //! (resized to params.size()).
  virtual double value_and_grad(const Eigen::VectorXd& params,
                                RowIndices rows,
                                Eigen::VectorXd& grad) const = 0;

  virtual double value(const Eigen::VectorXd& params, RowIndices rows) const
  {
    Eigen::VectorXd scratch;
    return value_and_grad(params, rows, scratch);
  }
};

struct LossAndGrad
{
  double value;
  Eigen::VectorXd grad;
};

//! Evaluates an objective, rejecting non-finite results with a TrainingError
//! that carries `batch_index`.
LossAndGrad
value_and_grad(const Objective& objective,
               const Eigen::VectorXd& params,
               RowIndices rows,
               long batch_index = -1);

struct FitSettings
{
  int epochs = 100;
  Eigen::Index batch_size = 1024;
  double learning_rate = 1e-3;
  int patience = 10;
  std::uint64_t seed = 0;
  AdamSettings adam{};
};

struct TraceRow
{
  int epoch;
  double train_nll;
  double val_nll;
};

struct FitResult
{
  Eigen::VectorXd params; //!< best-validation checkpoint
  std::vector<TraceRow> trace;
  int best_epoch = 0;
  double initial_val_nll = 0.0;
  double best_val_nll = 0.0;
};

//! Minibatch minimisation with per-epoch validation. Epoch 0 in the trace is
//! the initial point; the returned parameters are the best validation
//! checkpoint, so the result is never worse than the start. With no
//! validation rows the training rows are used for model selection.
FitResult
minimize(const Objective& objective,
         Eigen::VectorXd initial,
         RowIndices train_rows,
         RowIndices val_rows,
         const FitSettings& settings);

void
write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace);

//! Deterministic chunked reduction: rows are cut into fixed chunks, each
//! chunk fills its own gradient buffer, and buffers are summed in chunk
//! order regardless of the worker count. `body(rows, grad)` returns the loss
//! sum of its rows and adds into `grad`.
template<typename Body>
double
reduce_rows(RowIndices rows,
            Eigen::Index n_params,
            Eigen::VectorXd& grad,
            Body&& body,
            Eigen::Index chunk = 256)
{
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index n_chunks = std::max<Eigen::Index>(1, (n + chunk - 1) / chunk);
  std::vector<Eigen::VectorXd> grads(static_cast<std::size_t>(n_chunks));
  std::vector<double> sums(static_cast<std::size_t>(n_chunks), 0.0);
  parallel_chunks(n_chunks, [&](Eigen::Index c) {
    const Eigen::Index begin = c * chunk;
    const Eigen::Index end = std::min(n, begin + chunk);
    auto& g = grads[static_cast<std::size_t>(c)];
    g = Eigen::VectorXd::Zero(n_params);
    if (begin < end)
      sums[static_cast<std::size_t>(c)] =
        body(rows.subspan(static_cast<std::size_t>(begin),
                          static_cast<std::size_t>(end - begin)),
             g);
  });
  grad = Eigen::VectorXd::Zero(n_params);
  double total = 0.0;
  for (Eigen::Index c = 0; c < n_chunks; ++c) {
    grad += grads[static_cast<std::size_t>(c)];
    total += sums[static_cast<std::size_t>(c)];
  }
  return total;
}

//! Row indices 0, ..., n - 1.
std::vector<Eigen::Index>
all_rows(Eigen::Index n);

struct Holdout
{
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> val;
};

//! Seeded shuffle of 0..n-1 with round(fraction * n) rows held out (at least
//! one when fraction > 0 and n > 1). Both parts are returned sorted.
Holdout
holdout_split(Eigen::Index n, double fraction, std::uint64_t seed);

} // namespace copulaflow
