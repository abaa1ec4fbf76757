// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Set network regressing a pose offset from two unordered point lists.
//
//   measurements (n x 2) -> pointwise MLP -> column max --+
//                                                          +-> concat (2D) -> head MLP -> (dx, dy, dphi)
//   map points   (m x 2) -> pointwise MLP -> column max --+
//
// The two pointwise MLPs share their weights across points. Hidden layers use
// ReLU, the pointwise MLPs keep ReLU on their last layer, the head's last
// layer is linear. Dropout (inverted scaling) follows every layer except the
// last of each MLP and is only active in training mode.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "setloc/geometry.hpp"
#include "setloc/rng.hpp"

namespace setloc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
  bool linear = false;
};

struct Mlp {
  std::vector<Layer> layers;

  Eigen::Index in_dim() const { return layers.front().weight.cols(); }
  Eigen::Index out_dim() const { return layers.back().weight.rows(); }
};

struct NetConfig {
  int point_dim = 2;
  std::vector<int> meas_widths{32, 64, 128};
  std::vector<int> map_widths{32, 64, 128};
  std::vector<int> head_widths{128, 64, 3};
  int feature_dim = 128;
  double dropout_rate = 0.3;
  // Point coordinates are multiplied by this before the first layer.
  double input_scale = 0.02;

  static NetConfig desk_scale();
  static NetConfig paper_scale();
  /// Small config for gradient checks.
  static NetConfig tiny();

  /// Throws if widths do not chain (pointwise outputs == feature_dim, head ends in 3).
  void validate() const;
  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

struct NetParams {
  Mlp meas;
  Mlp map;
  Mlp head;
  double s_tran = 0;
  double s_rot = 0;

  /// Same shapes, all zeros.
  NetParams zeros_like() const;
  /// Visits every parameter block as a flat vector, in a fixed order.
  void for_each_block(const std::function<void(Eigen::Map<Vector>)>& f);
  void for_each_block(const std::function<void(Eigen::Map<const Vector>)>& f) const;
  std::size_t size() const;
  bool same_shape(const NetParams& other) const;
};

std::uint64_t param_count(const NetConfig& config);

/// Glorot-uniform weights, zero biases, s_tran = s_rot = 0.
NetParams init_params(const NetConfig& config, std::uint64_t seed);

struct MlpCache {
  Matrix input;
  std::vector<Matrix> pre;   // per layer, rows x out
  std::vector<Matrix> out;   // after activation and dropout
  std::vector<Matrix> mask;  // dropout scale factors, empty when inactive
};

struct ForwardCache {
  MlpCache meas;
  MlpCache map;
  MlpCache head;
  std::vector<Eigen::Index> meas_argmax;
  std::vector<Eigen::Index> map_argmax;
};

struct DropoutPolicy {
  double rate = 0;
  bool train_mode = false;
  Rng* rng = nullptr;  // required when active

  bool active() const { return train_mode && rate > 0; }
};

/// Applies the MLP to every row of `points` independently. Inference mode is
/// bit-exact per row regardless of row order or count; training mode uses a
/// faster blocked product that only agrees to rounding.
Matrix pointwise_forward(const Mlp& mlp, const Matrix& points, const DropoutPolicy& dropout,
                         MlpCache* cache = nullptr);

struct MaxPoolResult {
  Vector values;
  std::vector<Eigen::Index> argmax;  // smallest row index on ties
};

MaxPoolResult maxpool_columns(const Matrix& features);

/// Stacks points into an n x 2 matrix.
Matrix to_matrix(std::span<const Point2> points);

class SetNetwork {
 public:
  SetNetwork(NetConfig config, NetParams params);

  const NetConfig& config() const { return config_; }
  const NetParams& params() const { return params_; }
  NetParams& mutable_params() { return params_; }

  /// Inference-mode forward pass; consumes no randomness.
  PoseOffset predict(const Matrix& meas, const Matrix& map_pts) const;

  /// Raw 3-vector output. In training mode `rng` drives dropout.
  Eigen::Vector3d forward(const Matrix& meas, const Matrix& map_pts, bool train_mode, Rng* rng,
                          ForwardCache* cache = nullptr) const;

  /// Accumulates d(loss)/d(params) into `grads` for the recorded forward pass.
  void backward(const ForwardCache& cache, const Eigen::Vector3d& d_offset, NetParams& grads) const;

  /// Gradient structure for one forward pass; s gradients are passed through.
  NetParams backward(const ForwardCache& cache, const Eigen::Vector3d& d_offset, double d_s_tran,
                     double d_s_rot) const;

 private:
  NetConfig config_;
  NetParams params_;
};

/// Offset model used by the inference pipelines: (measurements, map points) -> offset.
using OffsetModel = std::function<PoseOffset(const Matrix& meas, const Matrix& map_pts)>;

OffsetModel as_offset_model(const SetNetwork& net);

}  // namespace setloc
