// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "setloc/net.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "setloc/error.hpp"

namespace setloc {

namespace {

Mlp make_mlp(int in_dim, const std::vector<int>& widths, bool linear_last) {
  Mlp mlp;
  int in = in_dim;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    Layer layer;
    layer.weight = Matrix::Zero(widths[i], in);
    layer.bias = Vector::Zero(widths[i]);
    layer.linear = linear_last && i + 1 == widths.size();
    mlp.layers.push_back(std::move(layer));
    in = widths[i];
  }
  return mlp;
}

std::uint64_t mlp_count(int in_dim, const std::vector<int>& widths) {
  std::uint64_t n = 0;
  std::uint64_t in = static_cast<std::uint64_t>(in_dim);
  for (const int w : widths) {
    n += in * static_cast<std::uint64_t>(w) + static_cast<std::uint64_t>(w);
    in = static_cast<std::uint64_t>(w);
  }
  return n;
}

template <typename MlpT, typename F>
void visit_mlp(MlpT& mlp, F&& f) {
  for (auto& layer : mlp.layers) {
    f(layer.weight.data(), layer.weight.size());
    f(layer.bias.data(), layer.bias.size());
  }
}

bool same_mlp_shape(const Mlp& a, const Mlp& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& la = a.layers[i];
    const auto& lb = b.layers[i];
    if (la.weight.rows() != lb.weight.rows() || la.weight.cols() != lb.weight.cols() ||
        la.bias.size() != lb.bias.size() || la.linear != lb.linear) {
      return false;
    }
  }
  return true;
}

/// Backpropagates `d_out` (gradient w.r.t. the given rows of the MLP output)
/// and accumulates weight gradients. Returns the gradient w.r.t. those rows of
/// the MLP input.
Matrix mlp_backward_rows(const Mlp& mlp, const MlpCache& cache, const std::vector<Eigen::Index>& rows, Matrix d_out,
                         Mlp& grads) {
  const bool all_rows = rows.empty();
  for (std::size_t l = mlp.layers.size(); l-- > 0;) {
    const Layer& layer = mlp.layers[l];
    if (cache.mask[l].size() != 0) {
      if (all_rows) {
        d_out.array() *= cache.mask[l].array();
      } else {
        d_out.array() *= cache.mask[l](rows, Eigen::all).array();
      }
    }
    if (!layer.linear) {
      const Matrix pre = all_rows ? cache.pre[l] : Matrix(cache.pre[l](rows, Eigen::all));
      d_out = (pre.array() > 0).select(d_out.array(), 0.0).matrix();
    }
    const Matrix& in_full = l == 0 ? cache.input : cache.out[l - 1];
    if (all_rows) {
      grads.layers[l].weight.noalias() += d_out.transpose() * in_full;
    } else {
      grads.layers[l].weight.noalias() += d_out.transpose() * in_full(rows, Eigen::all);
    }
    grads.layers[l].bias += d_out.colwise().sum().transpose();
    d_out = d_out * layer.weight;  // now w.r.t. this layer's input
  }
  return d_out;
}

void pool_backward(const Mlp& mlp, const MlpCache& cache, const std::vector<Eigen::Index>& argmax,
                   const Eigen::Ref<const Vector>& d_feature, Mlp& grads) {
  std::vector<Eigen::Index> rows(argmax.begin(), argmax.end());
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  Matrix d_out = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), d_feature.size());
  for (Eigen::Index j = 0; j < d_feature.size(); ++j) {
    const auto local = std::lower_bound(rows.begin(), rows.end(), argmax[static_cast<std::size_t>(j)]) - rows.begin();
    d_out(local, j) = d_feature(j);
  }
  mlp_backward_rows(mlp, cache, rows, std::move(d_out), grads);
}

void check_points(const Matrix& pts, const char* what) {
  if (pts.rows() < 1) {
    throw Error(ErrorCode::invalid_argument, std::string("network input '") + what + "' is empty");
  }
  if (pts.cols() != 2) {
    throw Error(ErrorCode::shape_mismatch, std::string("network input '") + what + "' must have 2 columns");
  }
}

}  // namespace

NetConfig NetConfig::desk_scale() { return NetConfig{}; }

NetConfig NetConfig::paper_scale() {
  NetConfig c;
  c.meas_widths = {64, 256, 1024};
  c.map_widths = {64, 256, 1024};
  c.head_widths = {512, 256, 64, 3};
  c.feature_dim = 1024;
  return c;
}

NetConfig NetConfig::tiny() {
  NetConfig c;
  c.meas_widths = {4, 8, 8};
  c.map_widths = {4, 8, 8};
  c.head_widths = {8, 4, 3};
  c.feature_dim = 8;
  return c;
}

void NetConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::invalid_argument, "NetConfig: " + msg); };
  if (point_dim != 2) fail("point_dim must be 2");
  if (feature_dim < 1) fail("feature_dim must be positive");
  if (meas_widths.empty() || map_widths.empty() || head_widths.empty()) fail("width lists must be non-empty");
  for (const auto* ws : {&meas_widths, &map_widths, &head_widths}) {
    for (const int w : *ws) {
      if (w < 1) fail("widths must be positive");
    }
  }
  if (meas_widths.back() != feature_dim || map_widths.back() != feature_dim) {
    fail("pointwise MLPs must end in feature_dim");
  }
  if (head_widths.back() != 3) fail("head must end in 3 outputs");
  if (!(dropout_rate >= 0 && dropout_rate < 1)) fail("dropout_rate must be in [0, 1)");
  if (!(input_scale > 0) || !std::isfinite(input_scale)) fail("input_scale must be positive");
}

NetParams NetParams::zeros_like() const {
  NetParams z = *this;
  z.for_each_block([](Eigen::Map<Vector> v) { v.setZero(); });
  return z;
}

void NetParams::for_each_block(const std::function<void(Eigen::Map<Vector>)>& f) {
  auto g = [&](double* data, Eigen::Index n) { f(Eigen::Map<Vector>(data, n)); };
  visit_mlp(meas, g);
  visit_mlp(map, g);
  visit_mlp(head, g);
  g(&s_tran, 1);
  g(&s_rot, 1);
}

void NetParams::for_each_block(const std::function<void(Eigen::Map<const Vector>)>& f) const {
  auto g = [&](const double* data, Eigen::Index n) { f(Eigen::Map<const Vector>(data, n)); };
  visit_mlp(meas, g);
  visit_mlp(map, g);
  visit_mlp(head, g);
  g(&s_tran, 1);
  g(&s_rot, 1);
}

std::size_t NetParams::size() const {
  std::size_t n = 0;
  for_each_block([&](Eigen::Map<const Vector> v) { n += static_cast<std::size_t>(v.size()); });
  return n;
}

bool NetParams::same_shape(const NetParams& other) const {
  return same_mlp_shape(meas, other.meas) && same_mlp_shape(map, other.map) && same_mlp_shape(head, other.head);
}

std::uint64_t param_count(const NetConfig& c) {
  c.validate();
  return mlp_count(c.point_dim, c.meas_widths) + mlp_count(c.point_dim, c.map_widths) +
         mlp_count(2 * c.feature_dim, c.head_widths) + 2;
}

NetParams init_params(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  NetParams p;
  p.meas = make_mlp(config.point_dim, config.meas_widths, false);
  p.map = make_mlp(config.point_dim, config.map_widths, false);
  p.head = make_mlp(2 * config.feature_dim, config.head_widths, true);
  Rng rng(seed);
  for (Mlp* mlp : {&p.meas, &p.map, &p.head}) {
    for (auto& layer : mlp->layers) {
      const double bound = std::sqrt(6.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols()));
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = rng.uniform(-bound, bound);
    }
  }
  return p;
}

namespace {

// Every row goes through the same matrix-vector kernel, so a point's features
// never depend on where it sits in the set. A blocked matrix product handles
// edge rows with different code paths, which breaks bit-exact permutation
// invariance in the last few ulps.
Matrix dense_rows(const Matrix& x, const Layer& layer) {
  const Matrix x_t = x.transpose();
  Matrix out_t(layer.weight.rows(), x.rows());
  Vector in(x.cols());
  Vector acc(layer.weight.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    in = x_t.col(i);
    acc.noalias() = layer.weight * in;
    acc += layer.bias;
    out_t.col(i) = acc;
  }
  return out_t.transpose();
}

// Training has no bit-exactness contract, so it takes the blocked product,
// about three times faster at these widths.
Matrix dense_blocked(const Matrix& x, const Layer& layer) {
  Matrix out(x.rows(), layer.weight.rows());
  out.noalias() = x * layer.weight.transpose();
  out.rowwise() += layer.bias.transpose();
  return out;
}

}  // namespace

Matrix pointwise_forward(const Mlp& mlp, const Matrix& points, const DropoutPolicy& dropout, MlpCache* cache) {
  if (points.rows() < 1) throw Error(ErrorCode::invalid_argument, "pointwise_forward: no input rows");
  if (points.cols() != mlp.in_dim()) throw Error(ErrorCode::shape_mismatch, "pointwise_forward: input width mismatch");
  if (dropout.active() && dropout.rng == nullptr) {
    throw Error(ErrorCode::invalid_argument, "pointwise_forward: dropout requires an rng");
  }
  if (cache) {
    cache->input = points;
    cache->pre.clear();
    cache->out.clear();
    cache->mask.clear();
  }
  const double keep = 1.0 - dropout.rate;
  Matrix x = points;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const Layer& layer = mlp.layers[l];
    Matrix pre = dropout.train_mode ? dense_blocked(x, layer) : dense_rows(x, layer);
    Matrix out = layer.linear ? pre : Matrix(pre.cwiseMax(0.0));
    Matrix mask;
    if (dropout.active() && l + 1 < mlp.layers.size()) {
      // Four 16-bit keep decisions per 64-bit draw.
      const auto threshold = static_cast<std::uint64_t>(std::llround(keep * 65536.0));
      mask.resize(out.rows(), out.cols());
      std::uint64_t bits = 0;
      for (Eigen::Index i = 0; i < mask.size(); ++i) {
        if (i % 4 == 0) bits = (*dropout.rng)();
        mask.data()[i] = (bits & 0xffff) < threshold ? 1.0 / keep : 0.0;
        bits >>= 16;
      }
      out.array() *= mask.array();
    }
    if (cache) {
      cache->pre.push_back(std::move(pre));
      cache->mask.push_back(std::move(mask));
      cache->out.push_back(out);
    }
    x = std::move(out);
  }
  return x;
}

MaxPoolResult maxpool_columns(const Matrix& features) {
  if (features.rows() < 1) throw Error(ErrorCode::invalid_argument, "maxpool_columns: no rows");
  MaxPoolResult r;
  r.values.resize(features.cols());
  r.argmax.resize(static_cast<std::size_t>(features.cols()));
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    Eigen::Index best = 0;
    double v = features(0, j);
    for (Eigen::Index i = 1; i < features.rows(); ++i) {
      if (features(i, j) > v) {
        v = features(i, j);
        best = i;
      }
    }
    r.values(j) = v;
    r.argmax[static_cast<std::size_t>(j)] = best;
  }
  return r;
}

Matrix to_matrix(std::span<const Point2> points) {
  Matrix m(static_cast<Eigen::Index>(points.size()), 2);
  for (std::size_t i = 0; i < points.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
  return m;
}

SetNetwork::SetNetwork(NetConfig config, NetParams params) : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  const NetParams expected = init_params(config_, 0);
  if (!expected.same_shape(params_)) {
    throw Error(ErrorCode::shape_mismatch, "SetNetwork: parameters do not match the network config");
  }
}

Eigen::Vector3d SetNetwork::forward(const Matrix& meas, const Matrix& map_pts, bool train_mode, Rng* rng,
                                    ForwardCache* cache) const {
  check_points(meas, "measurements");
  check_points(map_pts, "map");
  const DropoutPolicy dropout{config_.dropout_rate, train_mode, rng};
  const Matrix meas_feat = pointwise_forward(params_.meas, meas * config_.input_scale, dropout,
                                             cache ? &cache->meas : nullptr);
  const Matrix map_feat = pointwise_forward(params_.map, map_pts * config_.input_scale, dropout,
                                            cache ? &cache->map : nullptr);
  auto meas_pool = maxpool_columns(meas_feat);
  auto map_pool = maxpool_columns(map_feat);

  Matrix global(1, meas_pool.values.size() + map_pool.values.size());
  global << meas_pool.values.transpose(), map_pool.values.transpose();
  const Matrix out = pointwise_forward(params_.head, global, dropout, cache ? &cache->head : nullptr);
  if (cache) {
    cache->meas_argmax = std::move(meas_pool.argmax);
    cache->map_argmax = std::move(map_pool.argmax);
  }
  return out.row(0).transpose();
}

PoseOffset SetNetwork::predict(const Matrix& meas, const Matrix& map_pts) const {
  const Eigen::Vector3d out = forward(meas, map_pts, false, nullptr);
  if (!out.allFinite()) throw Error(ErrorCode::numeric, "network produced a non-finite offset");
  return {out(0), out(1), out(2)};
}

void SetNetwork::backward(const ForwardCache& cache, const Eigen::Vector3d& d_offset, NetParams& grads) const {
  if (!grads.same_shape(params_) || cache.head.pre.size() != params_.head.layers.size() ||
      cache.meas.pre.size() != params_.meas.layers.size() || cache.map.pre.size() != params_.map.layers.size() ||
      static_cast<Eigen::Index>(cache.meas_argmax.size()) != config_.feature_dim ||
      static_cast<Eigen::Index>(cache.map_argmax.size()) != config_.feature_dim) {
    throw Error(ErrorCode::shape_mismatch, "backward: cache or gradient does not match the network");
  }
  const Matrix d_global = mlp_backward_rows(params_.head, cache.head, {}, d_offset.transpose(), grads.head);
  const Eigen::Index d = config_.feature_dim;
  pool_backward(params_.meas, cache.meas, cache.meas_argmax, d_global.row(0).head(d).transpose(), grads.meas);
  pool_backward(params_.map, cache.map, cache.map_argmax, d_global.row(0).tail(d).transpose(), grads.map);
}

NetParams SetNetwork::backward(const ForwardCache& cache, const Eigen::Vector3d& d_offset, double d_s_tran,
                               double d_s_rot) const {
  NetParams grads = params_.zeros_like();
  backward(cache, d_offset, grads);
  grads.s_tran = d_s_tran;
  grads.s_rot = d_s_rot;
  return grads;
}

OffsetModel as_offset_model(const SetNetwork& net) {
  return [&net](const Matrix& meas, const Matrix& map_pts) { return net.predict(meas, map_pts); };
}

}  // namespace setloc
