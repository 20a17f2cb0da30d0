#pragma once

// Copula flow: a stack of masked-autoregressive layers of conditional
// [0, 1] -> [0, 1] rational-quadratic splines. The inverse direction maps
// copula-space points to independent uniforms; its log-determinant is the
// copula log-density because the base density on [0, 1]^d is 1.
//
// Matrices passed to the public functions hold one sample per row.

#include "copulaflow/made.hpp"
#include "copulaflow/optim.hpp"
#include "copulaflow/spline.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace copulaflow {

//! Inputs of every layer are clamped to [eps, 1 - eps].
inline constexpr double kCopulaEpsilon = 1e-6;

struct CopulaFlowLayer
{
  MaskedConditioner conditioner;
  Eigen::Index k_bins = 0;

  const std::vector<Eigen::Index>& ordering() const
  {
    return conditioner.ordering();
  }
};

struct CopulaFlowStack
{
  Eigen::Index dim = 0;
  Eigen::Index k_bins = 0;
  std::vector<Eigen::Index> hidden;
  std::vector<CopulaFlowLayer> layers;

  //! Raw spline parameters per dimension: 3 * k_bins + 1.
  Eigen::Index params_per_dim() const { return 3 * k_bins + 1; }
  Eigen::Index parameter_count() const;
  //! Layer blocks named "layer<i>" in application (sampling) order.
  ParamVector parameter_vector() const;
  void set_parameters(const Eigen::Ref<const Eigen::VectorXd>& flat);
};

//! Fresh stack whose every spline is the identity (zero output layer), so
//! it starts as the independence copula. Orderings alternate natural and
//! reversed.
CopulaFlowStack
build_copula_flow(Eigen::Index dim,
                  const std::vector<Eigen::Index>& hidden,
                  Eigen::Index k_bins,
                  Eigen::Index n_layers,
                  std::uint64_t seed);

struct CopulaTransform
{
  Eigen::MatrixXd u;      //!< N x d independent uniforms
  Eigen::VectorXd logdet; //!< log |det du/du_X| per row
  long saturated = 0;     //!< clamped layer inputs
};

//! Copula space -> independent uniforms, layers applied last to first.
CopulaTransform
copula_inverse(const CopulaFlowStack& stack, const Eigen::MatrixXd& u_x);

//! Copula log-density per row (the log-determinant of the inverse).
Eigen::VectorXd
copula_logdensity(const CopulaFlowStack& stack, const Eigen::MatrixXd& u_x);

double
copula_logdensity(const CopulaFlowStack& stack, const Eigen::VectorXd& row);

//! Independent uniforms -> copula space. Within a layer, dimensions are
//! generated one at a time in the layer ordering.
Eigen::MatrixXd
copula_sample(const CopulaFlowStack& stack, const Eigen::MatrixXd& u);

//! Spline parameters that one layer assigns to each dimension for a single
//! (copula-space) input; d x (3K + 1), row per dimension.
Eigen::MatrixXd
layer_spline_params(const CopulaFlowLayer& layer, const Eigen::VectorXd& input);

struct CopulaConfig
{
  std::vector<Eigen::Index> hidden{ 512, 512 };
  Eigen::Index k_bins = 16;
  Eigen::Index n_layers = 10;
  int epochs = 100;
  Eigen::Index batch_size = 512;
  double learning_rate = 1e-4;
  int patience = 10;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

//! Negative mean copula log-density over rows of a fixed N x d matrix; the
//! parameters are the stack's flat conditioner weights.
class CopulaNll : public Objective
{
public:
  CopulaNll(CopulaFlowStack architecture, const Eigen::MatrixXd& u_data);

  Eigen::Index rows() const override { return data_.cols(); }
  double value_and_grad(const Eigen::VectorXd& params,
                        RowIndices rows,
                        Eigen::VectorXd& grad) const override;
  double value(const Eigen::VectorXd& params, RowIndices rows) const override;

private:
  CopulaFlowStack stack_;
  Eigen::MatrixXd data_; // d x N
};

struct CopulaFit
{
  CopulaFlowStack stack;
  std::vector<TraceRow> trace;
  std::vector<std::string> warnings;
};

//! Maximum-likelihood training of the copula flow on uniform marginals.
CopulaFit
fit_copula(CopulaFlowStack stack,
           const Eigen::MatrixXd& u_data,
           const CopulaConfig& config);

} // namespace copulaflow
