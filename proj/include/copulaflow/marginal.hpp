#pragma once

// Continuous univariate flows. The forward spline is the column's quantile
// function, its inverse the CDF, and the inverse log-derivative the log-pdf.

#include "copulaflow/optim.hpp"
#include "copulaflow/spline.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace copulaflow {

struct MarginalConfig
{
  Eigen::Index k_bins = 512;
  int epochs = 100;
  Eigen::Index batch_size = 1024;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  int patience = 10;
  //! Support padding as a fraction of the observed range.
  double bound_margin = 0.05;
  //! Explicit support; overrides the padded data range.
  std::optional<std::pair<double, double>> bounds;
};

//! Counts points clamped into the spline support.
struct Diagnostics
{
  long saturated = 0;
};

class MarginalFlowModel
{
public:
  MarginalFlowModel() = default;
  MarginalFlowModel(RawSplineParamsd params, std::string column_id);

  //! Zero raw parameters: uniform density on [lower, upper].
  static MarginalFlowModel affine(Eigen::Index bins,
                                  double lower,
                                  double upper,
                                  std::string column_id = {});

  const RawSplineParamsd& params() const { return params_; }
  const NormalizedSplined& spline() const { return spline_; }
  const std::string& column_id() const { return column_id_; }
  std::pair<double, double> data_bounds() const
  {
    return { params_.lower, params_.upper };
  }

  //! Points clamped while fitting.
  long saturation_count = 0;

private:
  RawSplineParamsd params_;
  NormalizedSplined spline_;
  std::string column_id_;
};

struct MarginalFit
{
  MarginalFlowModel model;
  std::vector<TraceRow> trace;
};

//! Starting parameters with knots at empirical quantiles of `values`
//! (clamped to the bounds) and knot slopes at the geometric mean of the
//! neighbouring bin slopes. Tied data get bins of twice the floor width.
RawSplineParamsd
quantile_start(std::vector<double> values, Eigen::Index k, double lower, double upper);

//! Maximum-likelihood fit of a continuous column.
MarginalFit
fit_marginal(const Eigen::VectorXd& samples,
             const MarginalConfig& config,
             std::string column_id = {});

//! Support chosen for a column: explicit bounds or the padded data range.
std::pair<double, double>
marginal_bounds(const Eigen::VectorXd& samples, const MarginalConfig& config);

double
cdf(const MarginalFlowModel& model, double x, Diagnostics* diag = nullptr);

//! Throws ArgumentError for u outside [0, 1].
double
quantile(const MarginalFlowModel& model, double u);

double
logpdf(const MarginalFlowModel& model, double x, Diagnostics* diag = nullptr);

Eigen::VectorXd
cdf(const MarginalFlowModel& model, const Eigen::VectorXd& x);

Eigen::VectorXd
quantile(const MarginalFlowModel& model, const Eigen::VectorXd& u);

//! Negative mean log-likelihood of a spline CDF over a fixed sample; the
//! parameters are the flat raw spline vector.
class MarginalNll : public Objective
{
public:
  MarginalNll(Eigen::VectorXd samples, double lower, double upper);

  Eigen::Index rows() const override { return samples_.size(); }
  double value_and_grad(const Eigen::VectorXd& params,
                        RowIndices rows,
                        Eigen::VectorXd& grad) const override;
  double value(const Eigen::VectorXd& params, RowIndices rows) const override;

private:
  Eigen::VectorXd samples_;
  double lower_;
  double upper_;
};

} // namespace copulaflow
