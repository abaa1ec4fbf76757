// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "setloc/eval.hpp"

namespace setloc {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("setloc_eval_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Rmse, Examples) {
  std::vector<Pose> truth{Pose(0, 0, 0), Pose(1, 2, 0.5), Pose(-3, 4, -1)};
  const RmseReport zero = rmse(truth, truth);
  EXPECT_EQ(zero.rmse_x, 0.0);
  EXPECT_EQ(zero.rmse_y, 0.0);
  EXPECT_EQ(zero.rmse_phi_deg, 0.0);
  EXPECT_EQ(zero.n_samples, 3u);

  std::vector<Pose> shifted;
  for (const auto& p : truth) shifted.emplace_back(p.x + 0.5, p.y, p.phi);
  EXPECT_NEAR(rmse(shifted, truth).rmse_x, 0.5, 1e-12);
  EXPECT_NEAR(rmse(shifted, truth).rmse_position(), 0.5, 1e-12);

  const double deg = std::numbers::pi / 180;
  std::vector<Pose> a{Pose(0, 0, 179 * deg)};
  std::vector<Pose> b{Pose(0, 0, -179 * deg)};
  EXPECT_NEAR(rmse(a, b).rmse_phi_deg, 2.0, 1e-9);

  EXPECT_THROW(rmse(a, truth), Error);
}

TEST(Rmse, PermutationCovariant) {
  Rng rng(1);
  std::vector<Pose> est;
  std::vector<Pose> truth;
  for (int i = 0; i < 200; ++i) {
    truth.emplace_back(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-3, 3));
    est.emplace_back(truth.back().x + rng.normal(0, 1), truth.back().y + rng.normal(0, 2),
                     truth.back().phi + rng.normal(0, 0.1));
  }
  const RmseReport ref = rmse(est, truth);
  std::vector<std::size_t> idx(est.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  std::vector<Pose> est2, truth2;
  for (auto i : idx) {
    est2.push_back(est[i]);
    truth2.push_back(truth[i]);
  }
  const RmseReport other = rmse(est2, truth2);
  EXPECT_NEAR(other.rmse_x, ref.rmse_x, 1e-12);
  EXPECT_NEAR(other.rmse_y, ref.rmse_y, 1e-12);
  EXPECT_NEAR(other.rmse_phi_deg, ref.rmse_phi_deg, 1e-12);
}

TEST(Rmse, OffsetResiduals) {
  std::vector<PoseOffset> pred{{0.1, 0.2, 0.0}, {-0.1, 0.0, 0.0}};
  std::vector<PoseOffset> target{{0, 0, 0}, {0, 0, 0}};
  const RmseReport r = rmse(pred, target);
  EXPECT_NEAR(r.rmse_x, 0.1, 1e-12);
  EXPECT_NEAR(r.rmse_y, std::sqrt(0.02), 1e-12);
}

struct World {
  Trajectory route;
  LandmarkMap map;
};

const World& world() {
  static const World w = [] {
    TrajectoryParams tp;
    tp.duration = 120;
    World out{generate_trajectory(21, tp), {}};
    out.map = generate_map(21, out.route, {});
    return out;
  }();
  return w;
}

TEST(Synthetic, ExactModelIsPerfectAndZeroModelMatchesPrior) {
  SyntheticEvalConfig cfg;
  cfg.trials = 300;
  const RmseReport exact = evaluate_synthetic(exact_registration_model(), world().map, world().route, cfg);
  EXPECT_LT(exact.rmse_position(), 1e-6);
  EXPECT_LT(exact.rmse_phi_deg, 1e-6);
  EXPECT_EQ(exact.n_samples, 300u);

  const OffsetModel zero = [](const Matrix&, const Matrix&) { return PoseOffset(); };
  const RmseReport prior = evaluate_synthetic(zero, world().map, world().route, cfg);
  // Predicting nothing leaves the uniform prior's spread: 2 / sqrt(3), 10 / sqrt(3) deg.
  EXPECT_NEAR(prior.rmse_x, 2 / std::sqrt(3.0), 0.1);
  EXPECT_NEAR(prior.rmse_y, 2 / std::sqrt(3.0), 0.1);
  EXPECT_NEAR(prior.rmse_phi_deg, 10 / std::sqrt(3.0), 0.5);
}

TEST(Synthetic, CalibrationOfStandInModels) {
  SyntheticEvalConfig cfg;
  cfg.trials = 200;
  const NetCalibration exact = calibrate_synthetic(exact_registration_model(), world().map, world().route, cfg);
  EXPECT_LT((exact.gain - Eigen::Vector3d::Ones()).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT(exact.sigma.maxCoeff(), 1e-6);

  // Halves the lateral offset and ignores the rest.
  const auto oracle = exact_registration_model();
  const OffsetModel lateral = [&](const Matrix& m, const Matrix& p) { return PoseOffset(0, 0.5 * oracle(m, p).dy, 0); };
  const NetCalibration half = calibrate_synthetic(lateral, world().map, world().route, cfg);
  EXPECT_NEAR(half.gain(0), 0, 1e-12);
  EXPECT_NEAR(half.gain(1), 0.5, 1e-6);
  EXPECT_NEAR(half.sigma(0), 0, 1e-12);
  EkfConfig ekf;
  ekf.set_net_calibration(half);
  EXPECT_GE(ekf.r_net(0, 0), 1e12);
}

TEST(Synthetic, Reproducible) {
  SyntheticEvalConfig cfg;
  cfg.trials = 50;
  cfg.sensor.lambda_clutter = 5;
  const NetConfig nc = NetConfig::tiny();
  const SetNetwork net(nc, init_params(nc, 2));
  const auto model = as_offset_model(net);
  const RmseReport a = evaluate_synthetic(model, world().map, world().route, cfg);
  const RmseReport b = evaluate_synthetic(model, world().map, world().route, cfg);
  EXPECT_EQ(a.rmse_x, b.rmse_x);
  EXPECT_EQ(a.rmse_phi_deg, b.rmse_phi_deg);
}

TEST(Sweep, SensorSettings) {
  const SensorConfig base;
  const SensorConfig c = sweep_sensor(SweepVariable::combined, 10, base);
  EXPECT_EQ(c.lambda_clutter, 10);
  EXPECT_EQ(c.lambda_miss, 10);
  EXPECT_NEAR(c.sigma_syn, 0.27, 1e-12);
  EXPECT_EQ(sweep_sensor(SweepVariable::clutter, 40, base).lambda_clutter, 40);
  EXPECT_EQ(sweep_sensor(SweepVariable::miss, 20, base).lambda_miss, 20);
  EXPECT_EQ(sweep_sensor(SweepVariable::noise, 0.5, base).sigma_syn, 0.5);
}

TEST(Sweep, DefaultGridsAndValidation) {
  const auto clutter = SweepSpec::default_grid(SweepVariable::clutter);
  EXPECT_EQ(clutter, (std::vector<double>{0, 10, 20, 30, 40, 50, 60, 70, 80}));
  EXPECT_EQ(SweepSpec::default_grid(SweepVariable::miss).back(), 30);
  EXPECT_DOUBLE_EQ(SweepSpec::default_grid(SweepVariable::noise).back(), 1.5);
  SweepSpec spec;
  EXPECT_THROW(spec.validate(), Error);
  spec.grid = {0};
  EXPECT_NO_THROW(spec.validate());
  for (auto v : {SweepVariable::clutter, SweepVariable::miss, SweepVariable::noise, SweepVariable::combined}) {
    EXPECT_EQ(parse_sweep_variable(to_string(v)), v);
  }
  EXPECT_THROW(parse_sweep_variable("fog"), Error);
}

TEST(Sweep, OriginMatchesCleanEvaluationAndRowsSorted) {
  const NetConfig nc = NetConfig::tiny();
  const SetNetwork net(nc, init_params(nc, 3));
  const auto model = as_offset_model(net);
  SyntheticEvalConfig base;
  base.trials = 40;
  SweepSpec spec;
  spec.variable = SweepVariable::clutter;
  spec.grid = {20, 0, 10};
  spec.trials = 40;
  spec.seed = base.seed;
  const auto rows = run_sweep(spec, model, world().map, world().route, base);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].value, 0);
  EXPECT_EQ(rows[2].value, 20);
  const RmseReport clean = evaluate_synthetic(model, world().map, world().route, base);
  EXPECT_EQ(rows[0].report.rmse_x, clean.rmse_x);
  EXPECT_EQ(rows[0].report.rmse_phi_deg, clean.rmse_phi_deg);
}

TEST(FittedSlope, KnownLines) {
  const std::vector<double> x{0, 1, 2, 3};
  const std::vector<double> y{1, 3, 5, 7};
  EXPECT_NEAR(fitted_slope(x, y), 2.0, 1e-12);
  const std::vector<double> flat{4, 4, 4, 4};
  EXPECT_NEAR(fitted_slope(x, flat), 0.0, 1e-12);
}

TEST(Timing, Summary) {
  std::vector<double> ms;
  for (int i = 1; i <= 100; ++i) ms.push_back(i);
  const TimingStats s = summarize_timings(ms);
  EXPECT_DOUBLE_EQ(s.mean_ms, 50.5);
  EXPECT_NEAR(s.p95_ms, 95, 1.0);
  EXPECT_EQ(s.repetitions, 100);
}

TEST(Bench, InputsHaveRequestedSizes) {
  const BenchInputs in = make_bench_inputs(50, 50, 1);
  EXPECT_EQ(in.meas.size(), 50u);
  EXPECT_EQ(in.map.size(), 50u);
  EXPECT_EQ(in.map.query_radius(in.pose.position(), 100).size(), 50u);
}

TEST(Bench, DeskNetworkIsFast) {
  const NetConfig nc = NetConfig::desk_scale();
  const SetNetwork net(nc, init_params(nc, 1));
  const TimingStats s = bench_inference(net, make_bench_inputs(50, 50, 1), 50);
  EXPECT_LT(s.mean_ms, 5.0);
  EXPECT_EQ(s.repetitions, 50);
}

TEST(Report, SingleRowCsvAndSvg) {
  const fs::path dir = scratch_dir("single");
  std::vector<SweepRow> rows{{40, {0.4, 0.3, 1.5, 10, 0, 0}}};
  emit_report(rows, "clutter", dir / "r.csv", ReportFormat::csv);
  EXPECT_EQ(slurp(dir / "r.csv"), "value,rmse_x,rmse_y,rmse_phi\n40,0.4,0.3,1.5\n");
  emit_report(rows, "clutter", dir / "r.svg", ReportFormat::svg);
  const std::string svg = slurp(dir / "r.svg");
  EXPECT_EQ(svg.rfind("<svg", 0) == 0 || svg.rfind("<?xml", 0) == 0, true);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("clutter"), std::string::npos);
  EXPECT_NE(svg.find("<circle"), std::string::npos);
  EXPECT_THROW(emit_report(std::span<const SweepRow>{}, "clutter", dir / "e.csv", ReportFormat::csv), Error);
}

TEST(Report, SvgIsDeterministic) {
  const fs::path dir = scratch_dir("det");
  std::vector<SweepRow> rows;
  for (int i = 0; i < 9; ++i) rows.push_back({10.0 * i, {0.2 + 0.01 * i, 0.25 + 0.02 * i, 1 + 0.1 * i, 500, 0, 0}});
  emit_report(rows, "clutter", dir / "a.svg", ReportFormat::svg);
  emit_report(rows, "clutter", dir / "b.svg", ReportFormat::svg);
  EXPECT_EQ(slurp(dir / "a.svg"), slurp(dir / "b.svg"));
  EXPECT_NE(slurp(dir / "a.svg").find("RMSE vs clutter"), std::string::npos);
}

TEST(Report, UnwritablePath) {
  std::vector<SweepRow> rows{{0, {}}};
  try {
    emit_report(rows, "miss", "/nonexistent/dir/r.csv", ReportFormat::csv);
    FAIL() << "expected error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::io);
  }
}

}  // namespace
}  // namespace setloc
