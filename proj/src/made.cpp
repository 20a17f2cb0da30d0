#include "copulaflow/made.hpp"
#include "copulaflow/errors.hpp"
#include "copulaflow/random.hpp"

#include <algorithm>
#include <cmath>

namespace copulaflow {

MaskedConditioner::MaskedConditioner(Eigen::Index input_dim,
                                     std::vector<Eigen::Index> hidden,
                                     Eigen::Index params_per_dim,
                                     std::vector<Eigen::Index> ordering,
                                     std::uint64_t seed)
  : input_dim_(input_dim)
  , params_per_dim_(params_per_dim)
  , hidden_(std::move(hidden))
  , ordering_(std::move(ordering))
{
  if (input_dim_ < 2)
    throw ConfigError("conditioner needs at least two inputs");
  if (params_per_dim_ < 1)
    throw ConfigError("conditioner needs at least one output per dimension");
  if (static_cast<Eigen::Index>(ordering_.size()) != input_dim_)
    throw ConfigError("ordering length must equal the input dimension");
  for (Eigen::Index h : hidden_)
    if (h < 1)
      throw ConfigError("hidden layer sizes must be positive");

  order_index_ = Eigen::VectorXi::Constant(input_dim_, -1);
  for (std::size_t t = 0; t < ordering_.size(); ++t) {
    const Eigen::Index dim = ordering_[t];
    if (dim < 0 || dim >= input_dim_ || order_index_(dim) != -1)
      throw ConfigError("ordering must be a permutation of 0..d-1");
    order_index_(dim) = static_cast<int>(t);
  }

  // Degrees: input dimension at position t has degree t + 1; hidden units
  // cycle through 1..d-1; output block k connects to hidden units of lower
  // degree than its own input degree.
  std::vector<Eigen::VectorXi> degrees;
  Eigen::VectorXi in_deg(input_dim_);
  for (Eigen::Index i = 0; i < input_dim_; ++i)
    in_deg(i) = order_index_(i) + 1;
  degrees.push_back(in_deg);
  const int max_hidden_deg = std::max<int>(1, static_cast<int>(input_dim_) - 1);
  for (Eigen::Index h : hidden_) {
    Eigen::VectorXi deg(h);
    for (Eigen::Index j = 0; j < h; ++j)
      deg(j) = static_cast<int>(j % max_hidden_deg) + 1;
    degrees.push_back(deg);
  }

  Rng rng(seed);
  for (std::size_t l = 0; l < hidden_.size(); ++l) {
    const auto& din = degrees[l];
    const auto& dout = degrees[l + 1];
    Eigen::MatrixXd mask(dout.size(), din.size());
    for (Eigen::Index r = 0; r < dout.size(); ++r)
      for (Eigen::Index c = 0; c < din.size(); ++c)
        mask(r, c) = dout(r) >= din(c) ? 1.0 : 0.0;
    const double bound = 1.0 / std::sqrt(static_cast<double>(din.size()));
    Eigen::MatrixXd w(dout.size(), din.size());
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        w(r, c) = bound * (2.0 * rng.uniform() - 1.0);
    weights_.push_back(w.cwiseProduct(mask));
    biases_.push_back(Eigen::VectorXd::Zero(dout.size()));
    masks_.push_back(std::move(mask));
  }
  const auto& last = degrees.back();
  Eigen::MatrixXd mask(output_dim(), last.size());
  for (Eigen::Index dim = 0; dim < input_dim_; ++dim) {
    const int own = order_index_(dim) + 1;
    for (Eigen::Index p = 0; p < params_per_dim_; ++p)
      for (Eigen::Index c = 0; c < last.size(); ++c)
        mask(dim * params_per_dim_ + p, c) =
          last(c) < own ? 1.0 : 0.0;
  }
  weights_.push_back(Eigen::MatrixXd::Zero(output_dim(), last.size()));
  biases_.push_back(Eigen::VectorXd::Zero(output_dim()));
  masks_.push_back(std::move(mask));
}

Eigen::MatrixXd
MaskedConditioner::forward(const Eigen::MatrixXd& input, Cache* cache) const
{
  if (input.rows() != input_dim_)
    throw ArgumentError("conditioner input has wrong dimension");
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(input);
  }
  Eigen::MatrixXd h = input;
  const std::size_t n_hidden = hidden_.size();
  for (std::size_t l = 0; l < n_hidden; ++l) {
    Eigen::MatrixXd a = weights_[l] * h;
    a.colwise() += biases_[l];
    h = a.array().tanh().matrix();
    if (cache)
      cache->activations.push_back(h);
  }
  Eigen::MatrixXd out = weights_[n_hidden] * h;
  out.colwise() += biases_[n_hidden];
  return out;
}

Eigen::MatrixXd
MaskedConditioner::backward(const Cache& cache,
                            const Eigen::MatrixXd& d_output,
                            Eigen::Ref<Eigen::VectorXd> grad) const
{
  std::vector<Eigen::Index> offsets(weights_.size());
  Eigen::Index total = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    offsets[l] = total;
    total += weights_[l].size() + biases_[l].size();
  }
  if (grad.size() != total)
    throw ArgumentError("conditioner gradient buffer has wrong size");

  Eigen::MatrixXd delta = d_output;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    const Eigen::MatrixXd& h_in = cache.activations[l];
    const Eigen::MatrixXd gw = (delta * h_in.transpose()).cwiseProduct(masks_[l]);
    grad.segment(offsets[l], gw.size()) +=
      Eigen::Map<const Eigen::VectorXd>(gw.data(), gw.size());
    grad.segment(offsets[l] + gw.size(), biases_[l].size()) += delta.rowwise().sum();
    Eigen::MatrixXd d_in = weights_[l].transpose() * delta;
    if (l > 0)
      delta = d_in.cwiseProduct((1.0 - h_in.array().square()).matrix());
    else
      delta = std::move(d_in);
  }
  return delta;
}

Eigen::Index
MaskedConditioner::parameter_count() const
{
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l)
    n += weights_[l].size() + biases_[l].size();
  return n;
}

Eigen::VectorXd
MaskedConditioner::parameters() const
{
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index o = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    flat.segment(o, weights_[l].size()) =
      Eigen::Map<const Eigen::VectorXd>(weights_[l].data(), weights_[l].size());
    o += weights_[l].size();
    flat.segment(o, biases_[l].size()) = biases_[l];
    o += biases_[l].size();
  }
  return flat;
}

void
MaskedConditioner::set_parameters(const Eigen::Ref<const Eigen::VectorXd>& flat)
{
  if (flat.size() != parameter_count())
    throw ArgumentError("conditioner parameter vector has wrong size");
  Eigen::Index o = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    auto& w = weights_[l];
    w = Eigen::Map<const Eigen::MatrixXd>(flat.data() + o, w.rows(), w.cols())
          .cwiseProduct(masks_[l]);
    o += w.size();
    biases_[l] = flat.segment(o, biases_[l].size());
    o += biases_[l].size();
  }
}

} // namespace copulaflow
