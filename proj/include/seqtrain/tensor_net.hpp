// seqtrain/tensor_net.hpp

// Copyright 2026  The seqtrain Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "seqtrain/common.hpp"

namespace seqtrain {

/// Fully-connected feed-forward network: sigmoid hidden layers and a linear
/// output layer. The Network itself only describes shapes; parameters live in
/// a flat ParameterVector.
///
/// Parameter layout is layer-major. For transition l (fan_in -> fan_out) the
/// block holds the fan_out x fan_in weight matrix in row-major order followed
/// by the fan_out biases. Hidden layer h_{l+1} = sigmoid(W_l h_l + b_l); the
/// last transition is affine with no nonlinearity.
class Network {
 public:
  struct Block {
    Eigen::Index offset;  // start of the weight matrix
    int fan_in;
    int fan_out;
    Eigen::Index weight_size() const { return Eigen::Index{fan_in} * fan_out; }
    Eigen::Index size() const { return weight_size() + fan_out; }
    Eigen::Index bias_offset() const { return offset + weight_size(); }
  };

  Network() = default;

  explicit Network(std::vector<int> layer_dims) : dims_(std::move(layer_dims)) {
    if (dims_.size() < 2)
      throw ConfigError("network needs at least an input and an output layer");
    Eigen::Index offset = 0;
    for (std::size_t l = 0; l < dims_.size(); ++l) {
      if (dims_[l] <= 0)
        throw ConfigError(detail::cat("layer ", l, " has non-positive size ", dims_[l]));
      if (l + 1 < dims_.size()) {
        Block b{offset, dims_[l], dims_[l + 1]};
        blocks_.push_back(b);
        offset += b.size();
      }
    }
    num_params_ = offset;
  }

  const std::vector<int>& layer_dims() const { return dims_; }
  int num_layers() const { return static_cast<int>(blocks_.size()); }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  Eigen::Index num_params() const { return num_params_; }
  const Block& block(int l) const { return blocks_.at(static_cast<std::size_t>(l)); }
  const std::vector<Block>& blocks() const { return blocks_; }

  using ConstWeights = Eigen::Map<const Matrix>;
  using Weights = Eigen::Map<Matrix>;

  ConstWeights weights(const ParameterVector& theta, int l) const {
    const Block& b = block(l);
    return ConstWeights(theta.data() + b.offset, b.fan_out, b.fan_in);
  }
  Weights weights(ParameterVector& theta, int l) const {
    const Block& b = block(l);
    return Weights(theta.data() + b.offset, b.fan_out, b.fan_in);
  }
  Eigen::Map<const Vector> bias(const ParameterVector& theta, int l) const {
    const Block& b = block(l);
    return Eigen::Map<const Vector>(theta.data() + b.bias_offset(), b.fan_out);
  }
  Eigen::Map<Vector> bias(ParameterVector& theta, int l) const {
    const Block& b = block(l);
    return Eigen::Map<Vector>(theta.data() + b.bias_offset(), b.fan_out);
  }

  void check_parameters(const ParameterVector& theta) const {
    if (theta.size() != num_params_)
      throw ConfigError(detail::cat("parameter vector has ", theta.size(),
                                    " entries, network expects ", num_params_));
  }

  bool operator==(const Network& o) const { return dims_ == o.dims_; }

 private:
  std::vector<int> dims_;
  std::vector<Block> blocks_;
  Eigen::Index num_params_ = 0;
};

/// Per-layer weights and biases in unpacked form.
struct LayerParameters {
  Matrix weights;  // fan_out x fan_in
  Vector bias;
};

inline std::vector<LayerParameters> unpack(const Network& net, const ParameterVector& theta) {
  net.check_parameters(theta);
  std::vector<LayerParameters> layers;
  for (int l = 0; l < net.num_layers(); ++l)
    layers.push_back({net.weights(theta, l), net.bias(theta, l)});
  return layers;
}

inline ParameterVector pack(const Network& net, const std::vector<LayerParameters>& layers) {
  if (static_cast<int>(layers.size()) != net.num_layers())
    throw ConfigError("layer count does not match network");
  ParameterVector theta(net.num_params());
  for (int l = 0; l < net.num_layers(); ++l) {
    const auto& b = net.block(l);
    if (layers[l].weights.rows() != b.fan_out || layers[l].weights.cols() != b.fan_in ||
        layers[l].bias.size() != b.fan_out)
      throw ConfigError(detail::cat("layer ", l, " has inconsistent shape"));
    net.weights(theta, l) = layers[l].weights;
    net.bias(theta, l) = layers[l].bias;
  }
  return theta;
}

/// Uniform(-r, r) weights with r = sqrt(6 / (fan_in + fan_out)), zero biases.
inline ParameterVector init_parameters(const Network& net, std::mt19937_64& rng) {
  ParameterVector theta = ParameterVector::Zero(net.num_params());
  for (int l = 0; l < net.num_layers(); ++l) {
    const auto& b = net.block(l);
    const double r = std::sqrt(6.0 / (b.fan_in + b.fan_out));
    std::uniform_real_distribution<double> dist(-r, r);
    auto w = net.weights(theta, l);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
  }
  return theta;
}

/// T x D_in block of features for one utterance.
struct FrameBatch {
  Matrix frames;
  std::string utterance_id;

  Eigen::Index num_frames() const { return frames.rows(); }

  void validate() const {
    if (frames.rows() < 1)
      throw DataError(detail::cat("utterance '", utterance_id, "' has no frames"));
    if (!frames.allFinite())
      throw DataError(detail::cat("utterance '", utterance_id, "' has non-finite features"));
  }
};

/// Cached intermediates of one forward pass. layer_inputs[l] is the input to
/// transition l (layer_inputs[0] are the frames, the rest are sigmoid
/// outputs); output holds the linear output activations.
struct ActivationRecord {
  std::vector<Matrix> layer_inputs;
  Matrix output;
  std::uint64_t theta_tag = 0;

  Eigen::Index num_frames() const { return output.rows(); }
};

namespace detail {

inline Matrix sigmoid(const Matrix& z) {
  return (1.0 / (1.0 + (-z.array()).exp())).matrix();
}

inline void check_record(const Network& net, const ParameterVector& theta,
                         const ActivationRecord& rec) {
  net.check_parameters(theta);
  if (static_cast<int>(rec.layer_inputs.size()) != net.num_layers())
    throw UsageError("activation record does not belong to this network");
  if (rec.theta_tag != fingerprint(theta))
    throw UsageError("activation record is stale: parameters changed since forward()");
}

}  // namespace detail

inline ActivationRecord forward(const Network& net, const ParameterVector& theta,
                                const Matrix& frames) {
  net.check_parameters(theta);
  if (frames.cols() != net.input_dim())
    throw ConfigError(detail::cat("frames have ", frames.cols(), " columns, network input is ",
                                  net.input_dim()));
  if (!theta.allFinite()) throw NumericError("non-finite parameters");
  ActivationRecord rec;
  rec.theta_tag = fingerprint(theta);
  rec.layer_inputs.reserve(static_cast<std::size_t>(net.num_layers()));
  rec.layer_inputs.push_back(frames);
  for (int l = 0; l < net.num_layers(); ++l) {
    Matrix z = rec.layer_inputs.back() * net.weights(theta, l).transpose();
    z.rowwise() += net.bias(theta, l).transpose();
    if (!z.allFinite())
      throw NumericError(detail::cat("non-finite activation at layer ", l), l);
    if (l + 1 < net.num_layers())
      rec.layer_inputs.push_back(detail::sigmoid(z));
    else
      rec.output = std::move(z);
  }
  return rec;
}

inline ActivationRecord forward(const Network& net, const ParameterVector& theta,
                                const FrameBatch& batch) {
  batch.validate();
  return forward(net, theta, batch.frames);
}

/// Gradient of a scalar functional of the output activations, given its
/// derivative dF/da (T x D_out). This is exactly J^T applied to dF/da.
inline ParameterVector backward(const Network& net, const ParameterVector& theta,
                                const ActivationRecord& rec, const Matrix& d_output) {
  detail::check_record(net, theta, rec);
  if (d_output.rows() != rec.num_frames() || d_output.cols() != net.output_dim())
    throw UsageError("output derivative shape does not match activation record");
  ParameterVector grad(net.num_params());
  Matrix delta = d_output;
  for (int l = net.num_layers() - 1; l >= 0; --l) {
    const Matrix& in = rec.layer_inputs[static_cast<std::size_t>(l)];
    net.weights(grad, l).noalias() = delta.transpose() * in;
    net.bias(grad, l) = delta.colwise().sum().transpose();
    if (l > 0) {
      Matrix back = delta * net.weights(theta, l);
      delta = (back.array() * in.array() * (1.0 - in.array())).matrix();
    }
  }
  return grad;
}

/// Directional derivative J v of the output activations (Pearlmutter's R-op).
inline Matrix rop(const Network& net, const ParameterVector& theta, const ActivationRecord& rec,
                  const ParameterVector& v) {
  detail::check_record(net, theta, rec);
  if (v.size() != net.num_params()) throw UsageError("direction has wrong length");
  Matrix r_in;  // R{layer input}; zero for the frames
  for (int l = 0; l < net.num_layers(); ++l) {
    const Matrix& in = rec.layer_inputs[static_cast<std::size_t>(l)];
    Matrix rz = in * net.weights(v, l).transpose();
    rz.rowwise() += net.bias(v, l).transpose();
    if (l > 0) rz.noalias() += r_in * net.weights(theta, l).transpose();
    if (l + 1 < net.num_layers()) {
      const Matrix& out = rec.layer_inputs[static_cast<std::size_t>(l + 1)];
      r_in = (rz.array() * out.array() * (1.0 - out.array())).matrix();
    } else {
      return rz;
    }
  }
  return {};
}

/// J^T u. The criterion enters only through the output activations, so this
/// is the same computation as backward().
inline ParameterVector rop_transpose(const Network& net, const ParameterVector& theta,
                                     const ActivationRecord& rec, const Matrix& u) {
  return backward(net, theta, rec, u);
}

}  // namespace seqtrain
