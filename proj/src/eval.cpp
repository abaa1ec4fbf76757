// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "setloc/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "csv.hpp"

namespace setloc {

namespace {

enum StreamKey : std::uint64_t { kEvalStream = 31, kBenchStream = 32 };

struct Accumulator {
  double sx = 0, sy = 0, sphi = 0;
  std::vector<double> pos_sq;

  void add(double ex, double ey, double ephi) {
    sx += ex * ex;
    sy += ey * ey;
    sphi += ephi * ephi;
    pos_sq.push_back(ex * ex + ey * ey);
  }

  RmseReport report() const {
    const std::size_t n = pos_sq.size();
    if (n == 0) throw Error(ErrorCode::invalid_argument, "rmse: need at least one sample");
    const double nd = static_cast<double>(n);
    RmseReport r;
    r.rmse_x = std::sqrt(sx / nd);
    r.rmse_y = std::sqrt(sy / nd);
    r.rmse_phi_deg = rad_to_deg(std::sqrt(sphi / nd));
    r.n_samples = n;
    if (n > 1) {
      const double mean = (sx + sy) / nd;
      double var = 0;
      for (const double e : pos_sq) var += (e - mean) * (e - mean);
      var /= nd - 1;
      const double rms = std::sqrt(mean);
      r.position_se = rms > 0 ? std::sqrt(var / nd) / (2 * rms) : 0.0;
    }
    return r;
  }
};

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string fmt(double v, int prec = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

}  // namespace

double RmseReport::rmse_position() const { return std::sqrt(rmse_x * rmse_x + rmse_y * rmse_y); }

RmseReport rmse(std::span<const Pose> estimates, std::span<const Pose> truths) {
  if (estimates.size() != truths.size()) {
    throw Error(ErrorCode::shape_mismatch, "rmse: " + std::to_string(estimates.size()) + " estimates vs " +
                                               std::to_string(truths.size()) + " truths");
  }
  Accumulator acc;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    acc.add(estimates[i].x - truths[i].x, estimates[i].y - truths[i].y,
            wrap_angle(estimates[i].phi - truths[i].phi));
  }
  return acc.report();
}

RmseReport rmse(std::span<const PoseOffset> predictions, std::span<const PoseOffset> targets) {
  if (predictions.size() != targets.size()) {
    throw Error(ErrorCode::shape_mismatch, "rmse: prediction and target counts differ");
  }
  Accumulator acc;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    acc.add(predictions[i].dx - targets[i].dx, predictions[i].dy - targets[i].dy,
            wrap_angle(predictions[i].dphi - targets[i].dphi));
  }
  return acc.report();
}

namespace {

struct SyntheticResults {
  std::vector<PoseOffset> preds;
  std::vector<PoseOffset> targets;
  double total_ms = 0;
};

SyntheticResults run_synthetic(const OffsetModel& model, const LandmarkMap& map, const Trajectory& trajectory,
                               const SyntheticEvalConfig& config) {
  if (config.trials < 1) throw Error(ErrorCode::invalid_argument, "evaluate_synthetic: trials must be positive");
  if (trajectory.points.empty()) throw Error(ErrorCode::invalid_argument, "evaluate_synthetic: empty trajectory");
  config.sensor.validate();
  config.offset_range.validate();
  const Rng root = Rng(config.seed).fork(kEvalStream);
  SyntheticResults res;
  res.preds.reserve(static_cast<std::size_t>(config.trials));
  res.targets.reserve(static_cast<std::size_t>(config.trials));
  constexpr int kMaxAttempts = 1000;
  for (int trial = 0; trial < config.trials; ++trial) {
    Rng rng = root.fork(static_cast<std::uint64_t>(trial));
    bool done = false;
    for (int attempt = 0; attempt < kMaxAttempts && !done; ++attempt) {
      const auto& tp = trajectory.points[rng.below(trajectory.points.size())];
      const PoseOffset offset = sample_offset(config.offset_range, rng);
      auto visible = visible_landmarks(map, tp.pose, config.sensor.fov_radius);
      const MeasurementSet meas{impair(std::move(visible), config.sensor, rng.fork(1000 + attempt)), tp.t};
      const auto sample = make_train_sample(map, tp.pose, meas, offset, config.load_radius);
      if (!sample) continue;
      const auto start = Clock::now();
      res.preds.push_back(model(sample->meas, sample->map_pts));
      res.total_ms += elapsed_ms(start);
      res.targets.push_back(sample->target);
      done = true;
    }
    if (!done) throw Error(ErrorCode::no_landmarks, "evaluate_synthetic: no valid sample for trial " + std::to_string(trial));
  }
  return res;
}

}  // namespace

RmseReport evaluate_synthetic(const OffsetModel& model, const LandmarkMap& map, const Trajectory& trajectory,
                              const SyntheticEvalConfig& config) {
  const SyntheticResults res = run_synthetic(model, map, trajectory, config);
  RmseReport r = rmse(res.preds, res.targets);
  r.mean_ms = res.total_ms / static_cast<double>(config.trials);
  return r;
}

NetCalibration calibrate_synthetic(const OffsetModel& model, const LandmarkMap& map, const Trajectory& trajectory,
                                   const SyntheticEvalConfig& config) {
  const SyntheticResults res = run_synthetic(model, map, trajectory, config);
  return fit_calibration(res.preds, res.targets);
}

std::string to_string(SweepVariable v) {
  switch (v) {
    case SweepVariable::clutter: return "clutter";
    case SweepVariable::miss: return "miss";
    case SweepVariable::noise: return "noise";
    case SweepVariable::combined: return "combined";
  }
  return "unknown";
}

SweepVariable parse_sweep_variable(const std::string& s) {
  for (const auto v : {SweepVariable::clutter, SweepVariable::miss, SweepVariable::noise, SweepVariable::combined}) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorCode::invalid_argument, "unknown sweep variable '" + s + "' (expected clutter, miss, noise or combined)");
}

std::vector<double> SweepSpec::default_grid(SweepVariable v) {
  switch (v) {
    case SweepVariable::clutter: return {0, 10, 20, 30, 40, 50, 60, 70, 80};
    case SweepVariable::miss: return {0, 5, 10, 15, 20, 25, 30};
    case SweepVariable::noise: return {0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5};
    case SweepVariable::combined: return {0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
  }
  return {};
}

void SweepSpec::validate() const {
  if (grid.empty()) throw Error(ErrorCode::invalid_argument, "sweep grid is empty");
  if (trials < 1) throw Error(ErrorCode::invalid_argument, "sweep trials must be positive");
  for (const double v : grid) {
    if (!(v >= 0) || !std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "sweep grid values must be non-negative");
  }
}

SensorConfig sweep_sensor(SweepVariable variable, double value, const SensorConfig& base) {
  SensorConfig s = base;
  switch (variable) {
    case SweepVariable::clutter: s.lambda_clutter = value; break;
    case SweepVariable::miss: s.lambda_miss = value; break;
    case SweepVariable::noise: s.sigma_syn = value; break;
    case SweepVariable::combined:
      s.lambda_clutter = value;
      s.lambda_miss = value;
      s.sigma_syn = 0.027 * value;
      break;
  }
  return s;
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec, const OffsetModel& model, const LandmarkMap& map,
                                const Trajectory& trajectory, const SyntheticEvalConfig& base) {
  spec.validate();
  std::vector<double> grid = spec.grid;
  std::sort(grid.begin(), grid.end());
  std::vector<SweepRow> rows;
  for (const double value : grid) {
    SyntheticEvalConfig cfg = base;
    cfg.sensor = sweep_sensor(spec.variable, value, base.sensor);
    cfg.trials = spec.trials;
    cfg.seed = spec.seed;
    rows.push_back({value, evaluate_synthetic(model, map, trajectory, cfg)});
  }
  return rows;
}

double fitted_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::invalid_argument, "fitted_slope: need >= 2 pairs");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0) throw Error(ErrorCode::invalid_argument, "fitted_slope: x values are all equal");
  return sxy / sxx;
}

TimingStats summarize_timings(std::vector<double> ms) {
  if (ms.empty()) throw Error(ErrorCode::invalid_argument, "no timings to summarize");
  TimingStats t;
  t.repetitions = static_cast<int>(ms.size());
  double sum = 0;
  for (const double v : ms) sum += v;
  t.mean_ms = sum / static_cast<double>(ms.size());
  std::sort(ms.begin(), ms.end());
  const auto idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(ms.size()))) - 1;
  t.p95_ms = ms[std::min(idx, ms.size() - 1)];
  return t;
}

BenchInputs make_bench_inputs(int n_meas, int n_map, std::uint64_t seed) {
  if (n_meas < 1 || n_map < 1) throw Error(ErrorCode::invalid_argument, "bench inputs need at least one point each");
  Rng rng = Rng(seed).fork(kBenchStream);
  BenchInputs in;
  in.pose = Pose(500.0, 200.0, 0.3);
  std::vector<Landmark> lms;
  for (int i = 0; i < n_map; ++i) {
    const double r = 95.0 * std::sqrt(rng.uniform());
    const double a = 2 * std::numbers::pi * rng.uniform();
    lms.push_back({i, Point2(in.pose.x + r * std::cos(a), in.pose.y + r * std::sin(a)), LandmarkSource::laser});
  }
  in.map = LandmarkMap(std::move(lms));
  for (int i = 0; i < n_meas; ++i) {
    const double r = 50.0 * std::sqrt(rng.uniform());
    const double a = 2 * std::numbers::pi * rng.uniform();
    in.meas.emplace_back(r * std::cos(a), r * std::sin(a));
  }
  return in;
}

TimingStats bench_inference(const SetNetwork& net, const BenchInputs& inputs, int repetitions, int warmup) {
  if (repetitions < 1) throw Error(ErrorCode::invalid_argument, "bench_inference: repetitions must be positive");
  const OffsetModel model = as_offset_model(net);
  volatile double sink = 0;
  for (int i = 0; i < warmup; ++i) sink = sink + network_correct(model, inputs.pose, inputs.meas, inputs.map).x;
  std::vector<double> ms;
  ms.reserve(static_cast<std::size_t>(repetitions));
  for (int i = 0; i < repetitions; ++i) {
    const auto start = Clock::now();
    sink = sink + network_correct(model, inputs.pose, inputs.meas, inputs.map).x;
    ms.push_back(elapsed_ms(start));
  }
  return summarize_timings(std::move(ms));
}

TimingStats bench_mcl(const BenchInputs& inputs, std::size_t n_particles, int repetitions, int warmup,
                      std::uint64_t seed) {
  if (repetitions < 1) throw Error(ErrorCode::invalid_argument, "bench_mcl: repetitions must be positive");
  Rng rng(seed);
  const MclConfig cfg;
  const ParticleSet initial = ParticleSet::around(inputs.pose, n_particles, 1.0, deg_to_rad(2.0), rng);
  std::vector<double> ms;
  ms.reserve(static_cast<std::size_t>(repetitions));
  for (int i = 0; i < warmup + repetitions; ++i) {
    ParticleSet set = initial;
    const auto start = Clock::now();
    const auto res = mcl_baseline_step(std::move(set), inputs.meas, inputs.map, PoseOffset{}, cfg, rng);
    const double t = elapsed_ms(start);
    if (!std::isfinite(res.estimate.x)) throw Error(ErrorCode::numeric, "bench_mcl: non-finite estimate");
    if (i >= warmup) ms.push_back(t);
  }
  return summarize_timings(std::move(ms));
}

void emit_report(std::span<const SweepRow> rows, const std::string& variable, const std::filesystem::path& path,
                 ReportFormat format) {
  if (rows.empty()) throw Error(ErrorCode::invalid_argument, "emit_report: empty table");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");

  if (format == ReportFormat::csv) {
    out << "value,rmse_x,rmse_y,rmse_phi\n";
    for (const auto& r : rows) {
      out << detail::format_double(r.value) << ',' << detail::format_double(r.report.rmse_x) << ','
          << detail::format_double(r.report.rmse_y) << ',' << detail::format_double(r.report.rmse_phi_deg) << '\n';
    }
  } else {
    constexpr double kW = 640, kPanelH = 240, kLeft = 70, kRight = 20, kTop = 40, kGap = 60, kPlotH = 170;
    const double x_min = rows.front().value;
    const double x_max = rows.back().value;
    const double x_span = x_max > x_min ? x_max - x_min : 1.0;
    auto px = [&](double v) {
      return rows.size() == 1 ? kLeft + (kW - kLeft - kRight) / 2 : kLeft + (v - x_min) / x_span * (kW - kLeft - kRight);
    };

    struct Series {
      const char* label;
      const char* color;
      double (*get)(const RmseReport&);
    };
    const Series pos[] = {{"x", "#1f77b4", [](const RmseReport& r) { return r.rmse_x; }},
                          {"y", "#d62728", [](const RmseReport& r) { return r.rmse_y; }}};
    const Series rot[] = {{"phi", "#2ca02c", [](const RmseReport& r) { return r.rmse_phi_deg; }}};

    std::ostringstream svg;
    const double height = kTop + 2 * kPanelH + kGap / 2;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(kW, 0) << "\" height=\"" << fmt(height, 0)
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << fmt(kW / 2, 1) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">RMSE vs "
        << variable << "</text>\n";

    auto panel = [&](double top, std::span<const Series> series, const std::string& y_label) {
      double y_max = 0;
      for (const auto& r : rows) {
        for (const auto& s : series) y_max = std::max(y_max, s.get(r.report));
      }
      y_max = y_max > 0 ? y_max * 1.1 : 1.0;
      const double bottom = top + kPlotH;
      auto py = [&](double v) { return bottom - v / y_max * kPlotH; };
      svg << "<line x1=\"" << fmt(kLeft, 1) << "\" y1=\"" << fmt(bottom, 1) << "\" x2=\"" << fmt(kW - kRight, 1)
          << "\" y2=\"" << fmt(bottom, 1) << "\" stroke=\"black\"/>\n";
      svg << "<line x1=\"" << fmt(kLeft, 1) << "\" y1=\"" << fmt(top, 1) << "\" x2=\"" << fmt(kLeft, 1) << "\" y2=\""
          << fmt(bottom, 1) << "\" stroke=\"black\"/>\n";
      for (int k = 0; k <= 4; ++k) {
        const double v = y_max * k / 4;
        svg << "<text x=\"" << fmt(kLeft - 6, 1) << "\" y=\"" << fmt(py(v) + 4, 1) << "\" text-anchor=\"end\">"
            << fmt(v, 2) << "</text>\n";
      }
      for (const auto& r : rows) {
        svg << "<text x=\"" << fmt(px(r.value), 1) << "\" y=\"" << fmt(bottom + 16, 1)
            << "\" text-anchor=\"middle\">" << fmt(r.value, 2) << "</text>\n";
      }
      svg << "<text x=\"" << fmt(kW / 2, 1) << "\" y=\"" << fmt(bottom + 34, 1) << "\" text-anchor=\"middle\">"
          << variable << "</text>\n";
      svg << "<text x=\"16\" y=\"" << fmt(top + kPlotH / 2, 1) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
          << fmt(top + kPlotH / 2, 1) << ")\">" << y_label << "</text>\n";
      double legend_x = kW - kRight - 60;
      for (const auto& s : series) {
        if (rows.size() > 1) {
          svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
          for (std::size_t i = 0; i < rows.size(); ++i) {
            svg << (i ? " " : "") << fmt(px(rows[i].value), 1) << ',' << fmt(py(s.get(rows[i].report)), 1);
          }
          svg << "\"/>\n";
        }
        for (const auto& r : rows) {
          svg << "<circle cx=\"" << fmt(px(r.value), 1) << "\" cy=\"" << fmt(py(s.get(r.report)), 1)
              << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
        }
        svg << "<text x=\"" << fmt(legend_x, 1) << "\" y=\"" << fmt(top + 12, 1) << "\" fill=\"" << s.color << "\">"
            << s.label << "</text>\n";
        legend_x += 24;
      }
    };
    panel(kTop, pos, "position RMSE [m]");
    panel(kTop + kPanelH, rot, "heading RMSE [deg]");
    svg << "</svg>\n";
    out << svg.str();
  }
  out.flush();
  if (!out) throw Error(ErrorCode::io, "write to '" + path.string() + "' failed");
}

void save_rmse_report(const RmseReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out << "rmse_x,rmse_y,rmse_phi,n_samples\n";
  out << detail::format_double(report.rmse_x) << ',' << detail::format_double(report.rmse_y) << ','
      << detail::format_double(report.rmse_phi_deg) << ',' << report.n_samples << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::io, "write to '" + path.string() + "' failed");
}

}  // namespace setloc
