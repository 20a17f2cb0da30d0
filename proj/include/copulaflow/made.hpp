#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace copulaflow {

//! Masked feed-forward network: output block k (params_per_dim rows) depends
//! only on inputs that precede dimension k in `ordering`. The first
//! dimension of the ordering receives bias-only outputs.
//!
//! Batches are column-major: one sample per column.
class MaskedConditioner
{
public:
  struct Cache
  {
    std::vector<Eigen::MatrixXd> activations; //!< input, then every hidden
  };

  MaskedConditioner() = default;

  //! `ordering[t]` is the dimension generated at step t. Hidden weights are
  //! drawn uniformly in +-1/sqrt(fan_in); the output layer starts at zero.
  MaskedConditioner(Eigen::Index input_dim,
                    std::vector<Eigen::Index> hidden,
                    Eigen::Index params_per_dim,
                    std::vector<Eigen::Index> ordering,
                    std::uint64_t seed);

  Eigen::Index input_dim() const { return input_dim_; }
  Eigen::Index params_per_dim() const { return params_per_dim_; }
  Eigen::Index output_dim() const { return input_dim_ * params_per_dim_; }
  const std::vector<Eigen::Index>& hidden() const { return hidden_; }
  const std::vector<Eigen::Index>& ordering() const { return ordering_; }
  //! Position of each dimension within the ordering.
  const Eigen::VectorXi& order_index() const { return order_index_; }
  const std::vector<Eigen::MatrixXd>& masks() const { return masks_; }
  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, Cache* cache = nullptr) const;

  //! Back-propagates `d_output`; adds parameter gradients into `grad` (flat
  //! layout of `parameters()`) and returns the gradient w.r.t. the input.
  Eigen::MatrixXd backward(const Cache& cache,
                           const Eigen::MatrixXd& d_output,
                           Eigen::Ref<Eigen::VectorXd> grad) const;

  Eigen::Index parameter_count() const;
  //! Flat layout: per layer, weights (column-major) then biases.
  Eigen::VectorXd parameters() const;
  //! Masked entries are forced back to zero.
  void set_parameters(const Eigen::Ref<const Eigen::VectorXd>& flat);

private:
  Eigen::Index input_dim_ = 0;
  Eigen::Index params_per_dim_ = 0;
  std::vector<Eigen::Index> hidden_;
  std::vector<Eigen::Index> ordering_;
  Eigen::VectorXi order_index_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
  std::vector<Eigen::MatrixXd> masks_;
};

} // namespace copulaflow
