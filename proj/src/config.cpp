// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "setloc/config.hpp"

#include <fstream>
#include <functional>

#include "csv.hpp"

namespace setloc {

namespace {

Error bad_value(const std::string& key, const std::string& value, const char* expected) {
  return Error(ErrorCode::invalid_argument, "config key '" + key + "': '" + value + "' is not " + expected);
}

double to_double(const std::string& key, const std::string& v) {
  double out;
  if (!detail::parse_double(detail::trim(v), out) || !std::isfinite(out)) throw bad_value(key, v, "a number");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  std::int64_t out;
  if (!detail::parse_int(detail::trim(v), out) || out < INT32_MIN || out > INT32_MAX) {
    throw bad_value(key, v, "an integer");
  }
  return static_cast<int>(out);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  const auto s = detail::trim(v);
  std::uint64_t out;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw bad_value(key, v, "an unsigned integer");
  return out;
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto part : detail::split(v, ',')) out.push_back(to_int(key, std::string(part)));
  return out;
}

std::string from_int_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string num(double v) { return detail::format_double(v); }

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Binds a double member reached through `access`.
template <class Access>
Field real(const char* key, Access access) {
  return {key, [key, access](RunConfig& c, const std::string& v) { access(c) = to_double(key, v); },
          [access](const RunConfig& c) { return num(access(const_cast<RunConfig&>(c))); }};
}

template <class Access>
Field integer(const char* key, Access access) {
  return {key, [key, access](RunConfig& c, const std::string& v) { access(c) = to_int(key, v); },
          [access](const RunConfig& c) { return std::to_string(access(const_cast<RunConfig&>(c))); }};
}

template <class Access>
Field degrees(const char* key, Access access) {
  return {key, [key, access](RunConfig& c, const std::string& v) { access(c) = deg_to_rad(to_double(key, v)); },
          [access](const RunConfig& c) { return num(rad_to_deg(access(const_cast<RunConfig&>(c)))); }};
}

template <class Access>
Field widths(const char* key, Access access) {
  return {key, [key, access](RunConfig& c, const std::string& v) { access(c) = to_int_list(key, v); },
          [access](const RunConfig& c) { return from_int_list(access(const_cast<RunConfig&>(c))); }};
}

#define MEMBER(expr) [](RunConfig& c) -> auto& { return expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"run.seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64("run.seed", v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"run.out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = std::string(detail::trim(v)); },
       [](const RunConfig& c) { return c.out_dir; }},

      widths("net.meas_widths", MEMBER(c.net.meas_widths)),
      widths("net.map_widths", MEMBER(c.net.map_widths)),
      widths("net.head_widths", MEMBER(c.net.head_widths)),
      integer("net.feature_dim", MEMBER(c.net.feature_dim)),
      real("net.dropout", MEMBER(c.net.dropout_rate)),
      real("net.input_scale", MEMBER(c.net.input_scale)),

      integer("train.batch_size", MEMBER(c.train.batch_size)),
      real("train.learning_rate", MEMBER(c.train.learning_rate)),
      integer("train.steps", MEMBER(c.train.steps)),
      real("train.offset_x", MEMBER(c.train.offset_range.sigma_x)),
      real("train.offset_y", MEMBER(c.train.offset_range.sigma_y)),
      degrees("train.offset_phi_deg", MEMBER(c.train.offset_range.sigma_phi)),
      real("train.load_radius", MEMBER(c.train.load_radius)),
      {"train.regime",
       [](RunConfig& c, const std::string& v) {
         const auto s = detail::trim(v);
         if (s == "map_derived") {
           c.train.regime = MeasurementRegime::map_derived;
         } else if (s == "simulated") {
           c.train.regime = MeasurementRegime::simulated;
         } else {
           throw bad_value("train.regime", v, "map_derived or simulated");
         }
       },
       [](const RunConfig& c) {
         return std::string(c.train.regime == MeasurementRegime::simulated ? "simulated" : "map_derived");
       }},
      integer("train.threads", MEMBER(c.train.threads)),
      integer("train.rejection_window", MEMBER(c.train.rejection_window)),
      integer("train.checkpoint_every", MEMBER(c.checkpoint_every)),
      real("train.adam_beta1", MEMBER(c.train.adam.beta1)),
      real("train.adam_beta2", MEMBER(c.train.adam.beta2)),
      real("train.adam_epsilon", MEMBER(c.train.adam.epsilon)),

      real("sensor.fov_radius", MEMBER(c.sensor.fov_radius)),
      real("sensor.lambda_clutter", MEMBER(c.sensor.lambda_clutter)),
      real("sensor.lambda_miss", MEMBER(c.sensor.lambda_miss)),
      real("sensor.sigma_syn", MEMBER(c.sensor.sigma_syn)),
      real("sensor.gps_sigma_xy", MEMBER(c.sensor.gps_sigma_xy)),
      degrees("sensor.gps_sigma_phi_deg", MEMBER(c.sensor.gps_sigma_phi)),

      real("ekf.q_xy", MEMBER(c.ekf.q_xy)),
      real("ekf.q_phi_deg", MEMBER(c.ekf.q_phi_deg)),
      real("ekf.q_v", MEMBER(c.ekf.q_v)),
      real("ekf.q_omega_deg", MEMBER(c.ekf.q_omega_deg)),
      real("ekf.r_xy", MEMBER(c.ekf.r_xy)),
      real("ekf.r_phi_deg", MEMBER(c.ekf.r_phi_deg)),
      real("ekf.p0_xy", MEMBER(c.ekf.p0_xy)),
      real("ekf.p0_phi_deg", MEMBER(c.ekf.p0_phi_deg)),
      real("ekf.p0_v", MEMBER(c.ekf.p0_v)),
      real("ekf.p0_omega_deg", MEMBER(c.ekf.p0_omega_deg)),
      real("ekf.initial_speed", MEMBER(c.ekf.initial_speed)),

      real("mcl.sigma_l", MEMBER(c.mcl.sigma_l)),
      real("mcl.motion_sigma_xy", MEMBER(c.mcl.motion_sigma_xy)),
      degrees("mcl.motion_sigma_phi_deg", MEMBER(c.mcl.motion_sigma_phi)),
      integer("mcl.particles", MEMBER(c.mcl_particles)),

      real("world.duration", MEMBER(c.trajectory.duration)),
      real("world.dt", MEMBER(c.trajectory.dt)),
      real("world.speed_min", MEMBER(c.trajectory.speed_min)),
      real("world.speed_max", MEMBER(c.trajectory.speed_max)),
      real("world.turn_rate_min", MEMBER(c.trajectory.turn_rate_min)),
      real("world.turn_rate_max", MEMBER(c.trajectory.turn_rate_max)),
      real("world.segment_length", MEMBER(c.trajectory.segment_length)),
      real("world.density_per_km", MEMBER(c.map.density_per_km)),
      real("world.lateral_spread", MEMBER(c.map.lateral_spread)),
      real("world.lateral_sigma", MEMBER(c.map.lateral_sigma)),
      real("world.cell_size", MEMBER(c.map.cell_size)),

      integer("eval.trials", MEMBER(c.eval_trials)),
      {"eval.seed", [](RunConfig& c, const std::string& v) { c.eval_seed = to_u64("eval.seed", v); },
       [](const RunConfig& c) { return std::to_string(c.eval_seed); }},
      integer("eval.sequence_steps", MEMBER(c.sequence_steps)),

      integer("bench.repetitions", MEMBER(c.bench_repetitions)),
      integer("bench.points", MEMBER(c.bench_points)),
  };
  return table;
}

#undef MEMBER

double sq(double v) { return v * v; }

}  // namespace

RunConfig RunConfig::preset(const std::string& name) {
  RunConfig c;
  if (name == "desk-scale") {
    c.net = NetConfig::desk_scale();
    // Every training sample is freshly drawn, so there is nothing for dropout
    // to regularize, and at D = 128 it stalls the translation heads.
    c.net.dropout_rate = 0;
    c.train.batch_size = 64;
    c.train.learning_rate = 1e-4;
    c.train.steps = 20000;
  } else if (name == "paper-scale") {
    c.net = NetConfig::paper_scale();
    c.train.batch_size = 500;
    c.train.learning_rate = 1e-5;
    c.train.steps = 20000;
  } else if (name == "tiny") {
    // Smallest network that still learns the lateral and heading offsets in
    // well under a minute; dropout slows that down too much at this size.
    c.net.meas_widths = {16, 32, 64};
    c.net.map_widths = {16, 32, 64};
    c.net.head_widths = {64, 32, 3};
    c.net.feature_dim = 64;
    c.net.dropout_rate = 0;
    c.train.batch_size = 32;
    c.train.learning_rate = 1e-3;
    c.train.steps = 2000;
    c.checkpoint_every = 500;
    c.trajectory.duration = 60;
    c.eval_trials = 100;
    c.sequence_steps = 100;
    c.bench_repetitions = 20;
  } else {
    throw Error(ErrorCode::invalid_argument, "unknown preset '" + name + "' (expected desk-scale, paper-scale or tiny)");
  }
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  }
  throw Error(ErrorCode::invalid_argument, "unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(*this));
  return out;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  t.sensor = sensor;
  return t;
}

EkfConfig RunConfig::ekf_config() const {
  EkfConfig e;
  e.q_per_second = Vector5(sq(ekf.q_xy), sq(ekf.q_xy), sq(deg_to_rad(ekf.q_phi_deg)), sq(ekf.q_v),
                           sq(deg_to_rad(ekf.q_omega_deg)))
                       .asDiagonal();
  e.r_net = Eigen::Vector3d(sq(ekf.r_xy), sq(ekf.r_xy), sq(deg_to_rad(ekf.r_phi_deg))).asDiagonal();
  e.r_gps = Eigen::Vector2d(sq(sensor.gps_sigma_xy), sq(sensor.gps_sigma_xy)).asDiagonal();
  e.p0 = Vector5(sq(ekf.p0_xy), sq(ekf.p0_xy), sq(deg_to_rad(ekf.p0_phi_deg)), sq(ekf.p0_v),
                 sq(deg_to_rad(ekf.p0_omega_deg)))
             .asDiagonal();
  e.initial_speed = ekf.initial_speed;
  return e;
}

SyntheticEvalConfig RunConfig::eval_config() const {
  SyntheticEvalConfig e;
  e.offset_range = train.offset_range;
  e.sensor = sensor;
  e.trials = eval_trials;
  e.seed = eval_seed;
  e.load_radius = train.load_radius;
  return e;
}

void RunConfig::validate() const {
  net.validate();
  train_config().validate();
  ekf_config().validate();
  if (checkpoint_every < 1) throw Error(ErrorCode::invalid_argument, "train.checkpoint_every must be positive");
  if (eval_trials < 1) throw Error(ErrorCode::invalid_argument, "eval.trials must be positive");
  if (sequence_steps < 1) throw Error(ErrorCode::invalid_argument, "eval.sequence_steps must be positive");
  if (mcl_particles < 1) throw Error(ErrorCode::invalid_argument, "mcl.particles must be positive");
  if (bench_repetitions < 1 || bench_points < 1) {
    throw Error(ErrorCode::invalid_argument, "bench.repetitions and bench.points must be positive");
  }
  if (out_dir.empty()) throw Error(ErrorCode::invalid_argument, "run.out_dir must not be empty");
}

std::pair<std::string, std::string> parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) {
    throw Error(ErrorCode::invalid_argument, "expected key=value, got '" + text + "'");
  }
  const auto key = detail::trim(std::string_view(text).substr(0, eq));
  const auto value = detail::trim(std::string_view(text).substr(eq + 1));
  if (key.empty()) throw Error(ErrorCode::invalid_argument, "empty key in '" + text + "'");
  return {std::string(key), std::string(value)};
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open config '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto body = std::string_view(line);
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    if (detail::trim(body).empty()) continue;
    try {
      const auto [key, value] = parse_assignment(std::string(body));
      base.set(key, value);
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  for (const auto& [k, v] : config.entries()) out << k << " = " << v << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::io, "write to '" + path.string() + "' failed");
}

}  // namespace setloc
