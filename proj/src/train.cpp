// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "setloc/train.hpp"

#include <cmath>
#include <fstream>
#include <thread>

#include "csv.hpp"

namespace setloc {

namespace {

enum StreamKey : std::uint64_t { kSampleStream = 11, kDropoutStream = 12 };

std::vector<Eigen::Map<Vector>> blocks(NetParams& p) {
  std::vector<Eigen::Map<Vector>> out;
  p.for_each_block([&](Eigen::Map<Vector> b) { out.push_back(b); });
  return out;
}

std::vector<Eigen::Map<const Vector>> blocks(const NetParams& p) {
  std::vector<Eigen::Map<const Vector>> out;
  p.for_each_block([&](Eigen::Map<const Vector> b) { out.push_back(b); });
  return out;
}

void add_into(NetParams& acc, const NetParams& other) {
  auto a = blocks(acc);
  const auto b = blocks(other);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

}  // namespace

void OffsetRange::validate() const {
  for (const double v : {sigma_x, sigma_y, sigma_phi}) {
    if (!(v >= 0) || !std::isfinite(v)) {
      throw Error(ErrorCode::invalid_argument, "OffsetRange: half-widths must be finite and non-negative");
    }
  }
}

PoseOffset sample_offset(const OffsetRange& range, Rng& rng) {
  range.validate();
  const double dx = rng.uniform(-range.sigma_x, range.sigma_x);
  const double dy = rng.uniform(-range.sigma_y, range.sigma_y);
  const double dphi = rng.uniform(-range.sigma_phi, range.sigma_phi);
  return {dx, dy, dphi};
}

Pose displaced_prior(const Pose& true_pose, const PoseOffset& offset) {
  return compose_local(true_pose, inverse_local(offset));
}

std::vector<Point2> load_map_points(const LandmarkMap& map, const Pose& pose, double load_radius) {
  const auto to_vehicle = invert(pose_to_transform(pose));
  std::vector<Point2> out;
  for (const auto& lm : map.query_radius(pose.position(), load_radius)) out.push_back(apply(to_vehicle, lm.position));
  return out;
}

std::optional<TrainSample> make_train_sample(const LandmarkMap& map, const Pose& true_pose,
                                             const MeasurementSet& meas, const PoseOffset& offset,
                                             double load_radius) {
  if (meas.points.empty()) return std::nullopt;
  const Pose prior = displaced_prior(true_pose, offset);
  const auto map_pts = load_map_points(map, prior, load_radius);
  if (map_pts.empty()) return std::nullopt;
  return TrainSample{to_matrix(meas.points), to_matrix(map_pts), offset};
}

std::optional<TrainSample> make_train_sample(const LandmarkMap& map, const Pose& true_pose,
                                             const MeasurementSet& meas, const OffsetRange& range, Rng& rng,
                                             double load_radius) {
  const PoseOffset offset = sample_offset(range, rng);
  return make_train_sample(map, true_pose, meas, offset, load_radius);
}

Eigen::Vector3d offset_residual(const Eigen::Vector3d& pred, const PoseOffset& target) {
  return {pred(0) - target.dx, pred(1) - target.dy, wrap_angle(pred(2) - target.dphi)};
}

LossResult loss(std::span<const Eigen::Vector3d> preds, std::span<const PoseOffset> targets, double s_tran,
                double s_rot) {
  if (preds.size() != targets.size() || preds.empty()) {
    throw Error(ErrorCode::shape_mismatch, "loss: predictions and targets must be non-empty and equally long");
  }
  const double n = static_cast<double>(preds.size());
  const double w_tran = std::exp(-s_tran);
  const double w_rot = std::exp(-s_rot);
  LossResult r;
  r.d_pred.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Eigen::Vector3d res = offset_residual(preds[i], targets[i]);
    r.l_tran += res(0) * res(0) + res(1) * res(1);
    r.l_rot += res(2) * res(2);
    r.d_pred.emplace_back(2 * res(0) * w_tran / n, 2 * res(1) * w_tran / n, 2 * res(2) * w_rot / n);
  }
  r.l_tran /= n;
  r.l_rot /= n;
  r.total = r.l_tran * w_tran + s_tran + r.l_rot * w_rot + s_rot;
  r.d_s_tran = 1 - r.l_tran * w_tran;
  r.d_s_rot = 1 - r.l_rot * w_rot;
  return r;
}

LossResult loss(const PoseOffset& pred, const PoseOffset& target, double s_tran, double s_rot) {
  const Eigen::Vector3d p = pred.vector();
  return loss(std::span(&p, 1), std::span(&target, 1), s_tran, s_rot);
}

AdamState AdamState::zeros_like(const NetParams& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(NetParams& params, const NetParams& grads, AdamState& state, double lr, const AdamConfig& cfg) {
  if (!params.same_shape(grads) || !params.same_shape(state.m) || !params.same_shape(state.v)) {
    throw Error(ErrorCode::shape_mismatch, "adam_step: parameter, gradient and moment shapes differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1 - std::pow(cfg.beta1, t);
  const double bc2 = 1 - std::pow(cfg.beta2, t);
  auto p = blocks(params);
  const auto g = blocks(grads);
  auto m = blocks(state.m);
  auto v = blocks(state.v);
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i].cwiseAbs2();
    p[i].array() -= lr * (m[i].array() / bc1) / ((v[i].array() / bc2).sqrt() + cfg.epsilon);
  }
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::invalid_argument, "TrainConfig: " + msg); };
  if (batch_size < 1) fail("batch_size must be positive");
  if (!(learning_rate > 0)) fail("learning_rate must be positive");
  if (steps < 0) fail("steps must be non-negative");
  if (threads < 1) fail("threads must be positive");
  if (!(load_radius > 0)) fail("load_radius must be positive");
  if (rejection_window < 1) fail("rejection_window must be positive");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1) || !(adam.epsilon > 0)) {
    fail("invalid ADAM constants");
  }
  offset_range.validate();
  sensor.validate();
}

SampleSource::SampleSource(const LandmarkMap& map, const Trajectory& trajectory, const TrainConfig& config)
    : map_(map), trajectory_(trajectory), config_(config) {
  config_.validate();
  if (trajectory_.points.empty()) throw Error(ErrorCode::invalid_argument, "SampleSource: empty trajectory");
}

TrainSample SampleSource::draw(std::uint64_t step, std::uint64_t slot) {
  Rng rng = Rng(config_.seed).fork(kSampleStream).fork(step, slot);
  const auto max_attempts = static_cast<std::uint64_t>(config_.rejection_window) * 10;
  for (std::uint64_t attempt = 0; attempt < max_attempts; ++attempt) {
    const auto& tp = trajectory_.points[rng.below(trajectory_.points.size())];
    auto visible = visible_landmarks(map_, tp.pose, config_.sensor.fov_radius);
    if (config_.regime == MeasurementRegime::simulated) {
      visible = impair(std::move(visible), config_.sensor, rng.fork(attempt));
    }
    const MeasurementSet meas{std::move(visible), tp.t};
    auto sample = make_train_sample(map_, tp.pose, meas, config_.offset_range, rng, config_.load_radius);

    ++attempts_;
    ++window_attempts_;
    if (!sample) {
      ++rejections_;
      ++window_rejections_;
    }
    if (window_attempts_ >= static_cast<std::uint64_t>(config_.rejection_window)) {
      const double rate = static_cast<double>(window_rejections_) / static_cast<double>(window_attempts_);
      window_attempts_ = window_rejections_ = 0;
      if (rate > 0.9) {
        throw Error(ErrorCode::no_landmarks, "training sample rejection rate " + std::to_string(rate) +
                                                 " exceeds 0.9; the trajectory sees too few landmarks");
      }
    }
    if (sample) return std::move(*sample);
  }
  throw Error(ErrorCode::no_landmarks, "no valid training sample after " + std::to_string(max_attempts) + " draws");
}

LossRecord train_step(SetNetwork& net, AdamState& adam, std::span<const TrainSample> batch, double lr,
                      const AdamConfig& adam_cfg, const Rng& dropout_rng, int threads) {
  if (batch.empty()) throw Error(ErrorCode::invalid_argument, "train_step: empty batch");
  const NetParams& params = net.params();
  const double n = static_cast<double>(batch.size());
  const double w_tran = std::exp(-params.s_tran);
  const double w_rot = std::exp(-params.s_rot);

  const auto n_workers = static_cast<std::size_t>(std::clamp<int>(threads, 1, static_cast<int>(batch.size())));
  struct Partial {
    NetParams grads;
    double sq_tran = 0;
    double sq_rot = 0;
  };
  std::vector<Partial> partials(n_workers);
  auto work = [&](std::size_t w) {
    Partial& part = partials[w];
    part.grads = params.zeros_like();
    const std::size_t begin = batch.size() * w / n_workers;
    const std::size_t end = batch.size() * (w + 1) / n_workers;
    ForwardCache cache;
    for (std::size_t i = begin; i < end; ++i) {
      Rng drop = dropout_rng.fork(i);
      const Eigen::Vector3d out = net.forward(batch[i].meas, batch[i].map_pts, true, &drop, &cache);
      const Eigen::Vector3d res = offset_residual(out, batch[i].target);
      part.sq_tran += res(0) * res(0) + res(1) * res(1);
      part.sq_rot += res(2) * res(2);
      const Eigen::Vector3d d(2 * res(0) * w_tran / n, 2 * res(1) * w_tran / n, 2 * res(2) * w_rot / n);
      net.backward(cache, d, part.grads);
    }
  };
  if (n_workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }

  NetParams grads = std::move(partials[0].grads);
  double sq_tran = partials[0].sq_tran;
  double sq_rot = partials[0].sq_rot;
  for (std::size_t w = 1; w < n_workers; ++w) {
    add_into(grads, partials[w].grads);
    sq_tran += partials[w].sq_tran;
    sq_rot += partials[w].sq_rot;
  }

  LossRecord rec;
  rec.l_tran = sq_tran / n;
  rec.l_rot = sq_rot / n;
  rec.s_tran = params.s_tran;
  rec.s_rot = params.s_rot;
  rec.loss = rec.l_tran * w_tran + params.s_tran + rec.l_rot * w_rot + params.s_rot;
  if (!std::isfinite(rec.loss)) throw Error(ErrorCode::numeric, "training diverged: non-finite loss");
  grads.s_tran = 1 - rec.l_tran * w_tran;
  grads.s_rot = 1 - rec.l_rot * w_rot;
  adam_step(net.mutable_params(), grads, adam, lr, adam_cfg);
  return rec;
}

TrainResult train_loop(const LandmarkMap& map, const Trajectory& trajectory, const NetConfig& net_config,
                       const TrainConfig& config, std::optional<TrainState> resume, const StepCallback& on_step) {
  config.validate();
  net_config.validate();
  TrainState state;
  if (resume) {
    state = std::move(*resume);
  } else {
    state.params = init_params(net_config, config.seed);
    state.adam = AdamState::zeros_like(state.params);
  }
  SetNetwork net(net_config, std::move(state.params));
  SampleSource source(map, trajectory, config);
  const Rng dropout_root = Rng(config.seed).fork(kDropoutStream);

  TrainResult result;
  result.trace.reserve(static_cast<std::size_t>(config.steps));
  std::vector<TrainSample> batch(static_cast<std::size_t>(config.batch_size));
  for (int k = 0; k < config.steps; ++k) {
    const std::uint64_t step = state.step;
    for (std::size_t slot = 0; slot < batch.size(); ++slot) batch[slot] = source.draw(step, slot);
    LossRecord rec = train_step(net, state.adam, batch, config.learning_rate, config.adam, dropout_root.fork(step),
                                config.threads);
    rec.step = step;
    result.trace.push_back(rec);
    ++state.step;
    if (on_step) on_step(rec, net, state.adam);
  }
  state.params = net.params();
  result.state = std::move(state);
  return result;
}

void save_loss_trace(std::span<const LossRecord> trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out << "step,loss,L_tran,L_rot,s_tran,s_rot\n";
  for (const auto& r : trace) {
    out << r.step << ',' << detail::format_double(r.loss) << ',' << detail::format_double(r.l_tran) << ','
        << detail::format_double(r.l_rot) << ',' << detail::format_double(r.s_tran) << ','
        << detail::format_double(r.s_rot) << '\n';
  }
  out.flush();
  if (!out) throw Error(ErrorCode::io, "write to '" + path.string() + "' failed");
}

}  // namespace setloc
