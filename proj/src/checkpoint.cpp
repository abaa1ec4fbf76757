// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint files: a JSON envelope with configuration and scalars, and every
// parameter array stored as base64 of little-endian IEEE-754 doubles.

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "setloc/train.hpp"

namespace setloc {

namespace {

using nlohmann::json;

constexpr char kFormatName[] = "setloc-checkpoint";
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

Error corrupt(const std::string& what) { return Error(ErrorCode::parse, "corrupt checkpoint: " + what); }

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xff) << (8 * (7 - i));
  return r;
}

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kB64[(n >> 18) & 63];
    out += kB64[(n >> 12) & 63];
    out += kB64[(n >> 6) & 63];
    out += kB64[n & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t n = bytes[i] << 16;
    if (i + 1 < bytes.size()) n |= bytes[i + 1] << 8;
    out += kB64[(n >> 18) & 63];
    out += kB64[(n >> 12) & 63];
    out += i + 1 < bytes.size() ? kB64[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw corrupt("base64 length is not a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
      } else if (pad > 0 || (v[k] = value(c)) < 0) {
        throw corrupt("invalid base64 data");
      }
    }
    const std::uint32_t n = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<unsigned char>(n >> 16));
    if (pad < 2) out.push_back(static_cast<unsigned char>((n >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<unsigned char>(n & 0xff));
  }
  return out;
}

std::string encode_doubles(const double* data, std::size_t n) {
  std::vector<unsigned char> bytes(n * 8);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t le = to_little_endian(std::bit_cast<std::uint64_t>(data[i]));
    std::memcpy(bytes.data() + 8 * i, &le, 8);
  }
  return base64_encode(bytes);
}

std::vector<double> decode_doubles(const std::string& text, std::size_t expected) {
  const auto bytes = base64_decode(text);
  if (bytes.size() != expected * 8) {
    throw corrupt("array holds " + std::to_string(bytes.size() / 8) + " values, expected " + std::to_string(expected));
  }
  std::vector<double> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint64_t le;
    std::memcpy(&le, bytes.data() + 8 * i, 8);
    out[i] = std::bit_cast<double>(to_little_endian(le));
  }
  return out;
}

// Weights are written row-major.
json mlp_to_json(const Mlp& mlp) {
  json layers = json::array();
  for (const auto& layer : mlp.layers) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = layer.weight;
    layers.push_back({{"rows", w.rows()},
                      {"cols", w.cols()},
                      {"linear", layer.linear},
                      {"weight", encode_doubles(w.data(), static_cast<std::size_t>(w.size()))},
                      {"bias", encode_doubles(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()))}});
  }
  return layers;
}

Mlp mlp_from_json(const json& j) {
  Mlp mlp;
  for (const auto& l : j) {
    const auto rows = l.at("rows").get<Eigen::Index>();
    const auto cols = l.at("cols").get<Eigen::Index>();
    if (rows <= 0 || cols <= 0) throw corrupt("non-positive layer dimensions");
    const auto w = decode_doubles(l.at("weight").get<std::string>(), static_cast<std::size_t>(rows * cols));
    const auto b = decode_doubles(l.at("bias").get<std::string>(), static_cast<std::size_t>(rows));
    Layer layer;
    layer.weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        w.data(), rows, cols);
    layer.bias = Eigen::Map<const Vector>(b.data(), rows);
    layer.linear = l.at("linear").get<bool>();
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

json params_to_json(const NetParams& p) {
  return {{"meas", mlp_to_json(p.meas)},
          {"map", mlp_to_json(p.map)},
          {"head", mlp_to_json(p.head)},
          {"s_tran", encode_doubles(&p.s_tran, 1)},
          {"s_rot", encode_doubles(&p.s_rot, 1)}};
}

NetParams params_from_json(const json& j) {
  NetParams p;
  p.meas = mlp_from_json(j.at("meas"));
  p.map = mlp_from_json(j.at("map"));
  p.head = mlp_from_json(j.at("head"));
  p.s_tran = decode_doubles(j.at("s_tran").get<std::string>(), 1)[0];
  p.s_rot = decode_doubles(j.at("s_rot").get<std::string>(), 1)[0];
  return p;
}

json net_config_to_json(const NetConfig& c) {
  return {{"point_dim", c.point_dim},     {"meas_widths", c.meas_widths},   {"map_widths", c.map_widths},
          {"head_widths", c.head_widths}, {"feature_dim", c.feature_dim},   {"dropout_rate", c.dropout_rate},
          {"input_scale", c.input_scale}};
}

NetConfig net_config_from_json(const json& j) {
  NetConfig c;
  c.point_dim = j.at("point_dim").get<int>();
  c.meas_widths = j.at("meas_widths").get<std::vector<int>>();
  c.map_widths = j.at("map_widths").get<std::vector<int>>();
  c.head_widths = j.at("head_widths").get<std::vector<int>>();
  c.feature_dim = j.at("feature_dim").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.input_scale = j.at("input_scale").get<double>();
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"steps", c.steps},
          {"offset_range", {c.offset_range.sigma_x, c.offset_range.sigma_y, c.offset_range.sigma_phi}},
          {"seed", c.seed},
          {"adam", {c.adam.beta1, c.adam.beta2, c.adam.epsilon}},
          {"load_radius", c.load_radius},
          {"sensor",
           {{"fov_radius", c.sensor.fov_radius},
            {"lambda_clutter", c.sensor.lambda_clutter},
            {"lambda_miss", c.sensor.lambda_miss},
            {"sigma_syn", c.sensor.sigma_syn},
            {"gps_sigma_xy", c.sensor.gps_sigma_xy},
            {"gps_sigma_phi", c.sensor.gps_sigma_phi}}},
          {"regime", c.regime == MeasurementRegime::simulated ? "simulated" : "map_derived"},
          {"threads", c.threads},
          {"rejection_window", c.rejection_window}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.steps = j.at("steps").get<int>();
  const auto range = j.at("offset_range").get<std::vector<double>>();
  const auto adam = j.at("adam").get<std::vector<double>>();
  if (range.size() != 3 || adam.size() != 3) throw corrupt("malformed training configuration");
  c.offset_range = {range[0], range[1], range[2]};
  c.seed = j.at("seed").get<std::uint64_t>();
  c.adam = {adam[0], adam[1], adam[2]};
  c.load_radius = j.at("load_radius").get<double>();
  const auto& s = j.at("sensor");
  c.sensor.fov_radius = s.at("fov_radius").get<double>();
  c.sensor.lambda_clutter = s.at("lambda_clutter").get<double>();
  c.sensor.lambda_miss = s.at("lambda_miss").get<double>();
  c.sensor.sigma_syn = s.at("sigma_syn").get<double>();
  c.sensor.gps_sigma_xy = s.at("gps_sigma_xy").get<double>();
  c.sensor.gps_sigma_phi = s.at("gps_sigma_phi").get<double>();
  const auto regime = j.at("regime").get<std::string>();
  if (regime == "simulated") {
    c.regime = MeasurementRegime::simulated;
  } else if (regime == "map_derived") {
    c.regime = MeasurementRegime::map_derived;
  } else {
    throw corrupt("unknown measurement regime '" + regime + "'");
  }
  c.threads = j.at("threads").get<int>();
  c.rejection_window = j.at("rejection_window").get<int>();
  return c;
}

std::string widths_str(const std::vector<int>& w) {
  std::string s = "[";
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s + "]";
}

void check_dimensions(const NetConfig& found, const NetConfig& expected) {
  std::vector<std::string> diffs;
  auto compare = [&](const char* what, const std::string& a, const std::string& b) {
    if (a != b) diffs.push_back(std::string(what) + " is " + a + ", expected " + b);
  };
  compare("point_dim", std::to_string(found.point_dim), std::to_string(expected.point_dim));
  compare("feature_dim", std::to_string(found.feature_dim), std::to_string(expected.feature_dim));
  compare("meas_widths", widths_str(found.meas_widths), widths_str(expected.meas_widths));
  compare("map_widths", widths_str(found.map_widths), widths_str(expected.map_widths));
  compare("head_widths", widths_str(found.head_widths), widths_str(expected.head_widths));
  if (diffs.empty()) return;
  std::string msg = "checkpoint network dimensions differ: ";
  for (std::size_t i = 0; i < diffs.size(); ++i) msg += (i ? "; " : "") + diffs[i];
  throw Error(ErrorCode::shape_mismatch, msg);
}

}  // namespace

std::string rng_digest(std::uint64_t seed, std::uint64_t step) {
  Rng r = Rng(seed).fork(step);
  std::ostringstream os;
  os << std::hex << r();
  return os.str();
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json j;
  j["format"] = kFormatName;
  j["version"] = ckpt.version;
  j["net_config"] = net_config_to_json(ckpt.net_config);
  j["train_config"] = train_config_to_json(ckpt.train_config);
  j["step"] = ckpt.step;
  j["rng_digest"] = ckpt.rng_digest;
  j["params"] = params_to_json(ckpt.params);
  if (ckpt.adam) {
    j["adam"] = {{"step", ckpt.adam->step}, {"m", params_to_json(ckpt.adam->m)}, {"v", params_to_json(ckpt.adam->v)}};
  } else {
    j["adam"] = nullptr;
  }
  // Write to a sibling file first so an interrupted save never leaves a torn checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot open '" + tmp.string() + "' for writing");
    out << j.dump(1) << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::io, "write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::io, "cannot move checkpoint into '" + path.string() + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<NetConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open checkpoint '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, "corrupt checkpoint '" + path.string() + "': " + e.what());
  }

  Checkpoint ckpt;
  try {
    if (!j.is_object() || j.value("format", "") != kFormatName) throw corrupt("not a setloc checkpoint");
    ckpt.version = j.at("version").get<int>();
    if (ckpt.version != kCheckpointVersion) {
      throw Error(ErrorCode::version_mismatch, "checkpoint version " + std::to_string(ckpt.version) +
                                                   " is not supported (expected " +
                                                   std::to_string(kCheckpointVersion) + ")");
    }
    ckpt.net_config = net_config_from_json(j.at("net_config"));
    if (expected) check_dimensions(ckpt.net_config, *expected);
    ckpt.train_config = train_config_from_json(j.at("train_config"));
    ckpt.step = j.at("step").get<std::uint64_t>();
    ckpt.rng_digest = j.at("rng_digest").get<std::string>();
    ckpt.params = params_from_json(j.at("params"));
    if (!j.at("adam").is_null()) {
      const auto& a = j.at("adam");
      ckpt.adam = AdamState{params_from_json(a.at("m")), params_from_json(a.at("v")), a.at("step").get<std::uint64_t>()};
    }
  } catch (const json::exception& e) {
    throw corrupt(std::string(e.what()));
  }

  try {
    ckpt.net_config.validate();
    const NetParams reference = init_params(ckpt.net_config, 0);
    if (!reference.same_shape(ckpt.params)) throw corrupt("parameter shapes do not match the stored configuration");
    if (ckpt.adam && (!reference.same_shape(ckpt.adam->m) || !reference.same_shape(ckpt.adam->v))) {
      throw corrupt("optimizer state shapes do not match the parameters");
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::parse) throw;
    throw corrupt(e.what());
  }
  return ckpt;
}

}  // namespace setloc
