#pragma once

// Goodness-of-fit reports, ML efficacy and plot data.

#include "copulaflow/stats.hpp"
#include "copulaflow/trainer.hpp"

#include <string>
#include <vector>

namespace copulaflow {

//! Per-column KS of the uniform marginals of `data` against fresh uniforms.
std::vector<KsResult>
marginal_uniformity_report(const FittedModel& model, const Dataset& data, std::uint64_t seed);

//! Per-column KS between two datasets on numeric cell values.
std::vector<KsResult>
column_ks(const Dataset& a, const Dataset& b, std::uint64_t seed);

enum class Task
{
  classification,
  regression
};

struct EfficacyMetrics
{
  double accuracy = 0.0; //!< classification
  double f1_macro = 0.0; //!< classification
  double r2 = 0.0;       //!< regression

  double primary(Task task) const { return task == Task::regression ? r2 : f1_macro; }
};

struct EfficacyResult
{
  Task task = Task::regression;
  std::string target;
  EfficacyMetrics real; //!< learner trained on real data
  EfficacyMetrics synth; //!< learner trained on synthetic data
  //! Primary metric (R^2 or macro F1) of the real arm minus the synthetic arm.
  double gap = 0.0;
};

//! Trains the same learner on each training set and scores it on
//! `real_test`: least squares for a continuous target, L2-regularised
//! softmax regression for a discrete one. Throws TaskError for an unknown
//! or constant target.
EfficacyResult
ml_efficacy(const Dataset& real_train,
            const Dataset& synth_train,
            const Dataset& real_test,
            const std::string& target);

//! Scatter CSV (`x,y,set`) for one column pair of a real and an optional
//! synthetic dataset. Returns the least-squares lines per set.
struct PairFit
{
  std::string set;
  LineFit line;
};

std::vector<PairFit>
emit_scatter(const Dataset& real,
             const Dataset* synth,
             const std::string& x_column,
             const std::string& y_column,
             const std::string& csv_path,
             const std::string& svg_path = {});

struct PlotSummary
{
  std::vector<std::string> pair_files;
  std::vector<std::string> marginal_files;
};

//! Pair scatter CSV + SVG for every column pair, a histogram CSV + SVG per
//! column, and `fits.csv` with the regression lines.
PlotSummary
emit_plots(const Dataset& real, const Dataset& synth, const std::string& dir);

} // namespace copulaflow
