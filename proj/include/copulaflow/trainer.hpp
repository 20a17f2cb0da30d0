#pragma once

// Two-stage pipeline: per-column marginal flows, then a copula flow on the
// uniform marginals. Joint densities, likelihood decomposition and synthetic
// rows come from the composed model.

#include "copulaflow/copula.hpp"
#include "copulaflow/data.hpp"
#include "copulaflow/discrete.hpp"
#include "copulaflow/marginal.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace copulaflow {

struct TrainConfig
{
  MarginalConfig marginal;
  //! Discrete columns reuse the marginal epochs, batch size, learning rate
  //! and patience; only the bin count is separate.
  Eigen::Index discrete_bins = 0;
  CopulaConfig copula;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  //! Directory for the stage-2 uniform matrix; empty disables caching.
  std::string cache_dir;
  //! Cache only when rows x columns exceeds this.
  Eigen::Index cache_min_cells = 1'000'000;

  void validate() const;
};

//! INI-style config: [marginal], [copula] and [training] sections with
//! `key = value` lines. Unknown sections or keys throw ConfigError.
TrainConfig
parse_config(std::istream& in);

TrainConfig
load_config(const std::string& path);

void
write_config(std::ostream& out, const TrainConfig& config);

using ColumnModel = std::variant<MarginalFlowModel, DiscreteMarginalFlow>;

struct FitMetadata
{
  std::uint64_t seed = 0;
  //! Seed of the auxiliary uniforms used by the distributional transform.
  std::uint64_t transform_seed = 0;
  TrainConfig config;
};

struct FittedModel
{
  Schema schema;
  std::vector<ColumnModel> marginals;
  //! Absent for single-column data.
  std::optional<CopulaFlowStack> copula;
  FitMetadata metadata;

  Eigen::Index dim() const { return schema.size(); }
  Codecs codecs() const;
};

struct StageTrace
{
  std::string stage; //!< column name, or "copula"
  std::vector<TraceRow> trace;
};

struct TrainResult
{
  FittedModel model;
  std::vector<StageTrace> traces;
  std::vector<std::string> warnings;
};

TrainResult
train_pipeline(const Dataset& data, const TrainConfig& config);

//! Uniform marginals of the data. Discrete cells use the distributional
//! transform with auxiliary uniforms drawn from `seed`, or the fixed value
//! `fixed_v` when given.
Eigen::MatrixXd
to_uniform(const FittedModel& model,
           const Dataset& data,
           std::uint64_t seed,
           std::optional<double> fixed_v = std::nullopt,
           long* saturated = nullptr);

struct JointTerms
{
  double copula = 0.0;
  Eigen::VectorXd marginal; //!< per column
  double total = 0.0;
};

//! log density (continuous) or log probability mass (discrete) of one row,
//! given in dataset encoding. Discrete columns enter the copula at the
//! middle of their cell.
JointTerms
joint_terms(const FittedModel& model, const Eigen::RowVectorXd& row);

double
joint_logdensity(const FittedModel& model, const Eigen::RowVectorXd& row);

Eigen::VectorXd
joint_logdensity(const FittedModel& model, const Dataset& data);

struct LoglikReport
{
  double total = 0.0;
  double copula_term = 0.0;
  std::vector<std::string> names;
  Eigen::VectorXd marginal_terms;
  long saturated = 0;
};

//! Mean nats per row; total = copula_term + sum(marginal_terms).
LoglikReport
loglik_report(const FittedModel& model, const Dataset& data);

void
print_report(std::ostream& out, const LoglikReport& report);

//! Synthetic rows; bitwise deterministic for a given seed.
Dataset
generate(const FittedModel& model, Eigen::Index n_rows, std::uint64_t seed);

} // namespace copulaflow
