#pragma once

// Quantized flows for ordinal and categorical columns. The latent spline maps
// [0, 1] onto (-1, n - 1]; class k owns the latent cell (k - 1, k], so
// generation is ceil() of the latent quantile and the class probability is
// the CDF mass of its cell.

#include "copulaflow/marginal.hpp"
#include "copulaflow/optim.hpp"
#include "copulaflow/spline.hpp"

#include <Eigen/Dense>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace copulaflow {

//! Bijection between raw labels and integer codes 0..n-1. Ordinal labels are
//! integers ordered numerically; categorical labels are ordered
//! lexicographically.
class CategoryCodec
{
public:
  CategoryCodec() = default;

  //! Takes classes already in code order; throws on duplicates or fewer than
  //! two classes.
  CategoryCodec(std::vector<std::string> classes, bool ordinal);

  int n_classes() const { return static_cast<int>(classes_.size()); }
  bool ordinal() const { return ordinal_; }
  const std::vector<std::string>& classes() const { return classes_; }

  //! Throws DataError for labels outside the codec.
  int encode(std::string_view label) const;
  const std::string& decode(int code) const;

  //! Numeric value of a code: the integer label for ordinal columns, the code
  //! itself for categorical ones.
  double numeric_value(int code) const;

  bool operator==(const CategoryCodec& other) const
  {
    return ordinal_ == other.ordinal_ && classes_ == other.classes_;
  }

private:
  std::vector<std::string> classes_;
  std::vector<double> values_;
  std::unordered_map<std::string, int> index_;
  bool ordinal_ = false;
};

//! Builds a codec from a raw column. Ordinal labels must parse as integers;
//! they are canonicalised (e.g. "03" -> "3").
CategoryCodec
build_codec(std::span<const std::string> labels, bool ordinal);

//! Canonical text of an ordinal label; throws DataError if not an integer.
std::string
canonical_ordinal(std::string_view label);

struct DiscreteConfig
{
  //! 0 selects max(4 * n_classes, 32).
  Eigen::Index k_bins = 0;
  int epochs = 100;
  Eigen::Index batch_size = 1024;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  int patience = 10;
};

Eigen::Index
default_discrete_bins(int n_classes);

class DiscreteMarginalFlow
{
public:
  DiscreteMarginalFlow() = default;
  DiscreteMarginalFlow(CategoryCodec codec,
                       RawSplineParamsd latent,
                       std::string column_id);

  //! Zero raw parameters: equal mass for every class.
  static DiscreteMarginalFlow uniform(CategoryCodec codec,
                                      Eigen::Index bins,
                                      std::string column_id = {});

  const CategoryCodec& codec() const { return codec_; }
  const RawSplineParamsd& latent() const { return latent_; }
  const NormalizedSplined& spline() const { return spline_; }
  const std::string& column_id() const { return column_id_; }
  int n_classes() const { return codec_.n_classes(); }

  //! CDF at the cell edges: edges()(k) = Pr(code < k), k = 0..n.
  const Eigen::VectorXd& edges() const { return edges_; }

private:
  CategoryCodec codec_;
  RawSplineParamsd latent_;
  NormalizedSplined spline_;
  std::string column_id_;
  Eigen::VectorXd edges_;
};

struct DiscreteFit
{
  DiscreteMarginalFlow model;
  std::vector<TraceRow> trace;
};

//! Maximises sum log Pr(Y = code) with Pr(Y = k) = CDF(k) - CDF(k - 1).
DiscreteFit
fit_discrete(const Eigen::VectorXi& codes,
             const CategoryCodec& codec,
             const DiscreteConfig& config,
             std::string column_id = {});

//! Throws ArgumentError for k outside 0..n-1.
double
pmf(const DiscreteMarginalFlow& model, int k);

//! ceil of the latent quantile, i.e. the k with edges(k) < u <= edges(k+1)
//! (u = 0 maps to code 0).
int
sample_code(const DiscreteMarginalFlow& model, double u);

//! Distributional transform: edges(k) + v * pmf(k), kept strictly above the
//! lower cell edge for v > 0.
double
dist_transform(const DiscreteMarginalFlow& model, int k, double v);

//! Negative mean log-probability of integer codes under the quantized
//! latent spline; parameters are the flat raw spline vector.
class DiscreteNll : public Objective
{
public:
  DiscreteNll(Eigen::VectorXi codes, int n_classes);

  Eigen::Index rows() const override { return codes_.size(); }
  double value_and_grad(const Eigen::VectorXd& params,
                        RowIndices rows,
                        Eigen::VectorXd& grad) const override;
  double value(const Eigen::VectorXd& params, RowIndices rows) const override;

private:
  Eigen::VectorXd counts(RowIndices rows) const;

  Eigen::VectorXi codes_;
  int n_classes_;
};

} // namespace copulaflow
