// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0
//
// setloc command-line tool.
//
//   setloc gen-world --out world/
//   setloc train     --world world/ --out run/
//   setloc eval      --world world/ --checkpoint run/checkpoint.json --mode gps_net
//   setloc sweep     --world world/ --checkpoint run/checkpoint.json --variable clutter
//   setloc bench     --checkpoint run/checkpoint.json --mcl

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "setloc/config.hpp"
#include "setloc/error.hpp"
#include "setloc/eval.hpp"
#include "setloc/infer.hpp"
#include "setloc/train.hpp"
#include "setloc/world.hpp"

namespace fs = std::filesystem;
using namespace setloc;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct CommonOptions {
  std::string config_file;
  std::string preset = "desk-scale";
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_file, "Config file with `section.key = value` lines");
  cmd->add_option("--preset", o.preset, "Base preset: desk-scale, paper-scale or tiny");
  cmd->add_option("--set", o.sets, "Override one key, e.g. --set train.steps=500")->take_all();
  cmd->add_option("--seed", o.seed, "Seed for every random stream");
  cmd->add_option("--threads", o.threads, "Worker threads for training (1 is bit-exact)");
}

RunConfig build_config(const CommonOptions& o) {
  RunConfig cfg = RunConfig::preset(o.preset);
  if (!o.config_file.empty()) cfg = load_run_config(o.config_file, cfg);
  for (const auto& s : o.sets) {
    const auto [k, v] = parse_assignment(s);
    cfg.set(k, v);
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.threads) cfg.train.threads = *o.threads;
  cfg.validate();
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create directory '" + dir.string() + "': " + ec.message());
}

struct World {
  LandmarkMap map;
  Trajectory trajectory;
};

World load_world(const fs::path& dir, const RunConfig& cfg) {
  return {load_map(dir / "map.csv", cfg.map.cell_size), load_trajectory(dir / "trajectory.csv")};
}

int cmd_gen_world(const RunConfig& cfg, const fs::path& out) {
  ensure_dir(out);
  TrajectoryParams tp = cfg.trajectory;
  const Trajectory traj = generate_trajectory(cfg.seed, tp);
  const LandmarkMap map = generate_map(cfg.seed, traj, cfg.map);
  save_trajectory(traj, out / "trajectory.csv");
  save_map(map, out / "map.csv");
  std::cout << "landmarks " << map.size() << " route_m " << static_cast<long long>(traj.length()) << " steps "
            << traj.points.size() << '\n';
  return 0;
}

Checkpoint make_checkpoint(const RunConfig& cfg, const NetParams& params, const AdamState& adam, std::uint64_t step) {
  Checkpoint ck;
  ck.net_config = cfg.net;
  ck.train_config = cfg.train_config();
  ck.params = params;
  ck.adam = adam;
  ck.step = step;
  ck.rng_digest = rng_digest(cfg.seed, step);
  return ck;
}

int cmd_train(const RunConfig& cfg, const fs::path& world_dir, const fs::path& out, const std::string& resume) {
  const World world = load_world(world_dir, cfg);
  ensure_dir(out);
  std::optional<TrainState> state;
  if (!resume.empty()) {
    Checkpoint ck = load_checkpoint(resume, cfg.net);
    TrainState s;
    s.params = std::move(ck.params);
    s.adam = ck.adam ? std::move(*ck.adam) : AdamState::zeros_like(s.params);
    s.step = ck.step;
    state = std::move(s);
  }
  const auto ckpt_path = out / "checkpoint.json";
  const auto on_step = [&](const LossRecord& rec, const SetNetwork& net, const AdamState& adam) {
    const std::uint64_t done = rec.step + 1;
    if (done % static_cast<std::uint64_t>(cfg.checkpoint_every) == 0) {
      save_checkpoint(make_checkpoint(cfg, net.params(), adam, done), ckpt_path);
      std::cerr << "step " << done << " loss " << rec.loss << " L_tran " << rec.l_tran << " L_rot " << rec.l_rot
                << '\n';
    }
  };
  const TrainResult result = train_loop(world.map, world.trajectory, cfg.net, cfg.train_config(), state, on_step);
  save_checkpoint(make_checkpoint(cfg, result.state.params, result.state.adam, result.state.step), ckpt_path);
  save_loss_trace(result.trace, out / "loss.csv");
  save_run_config(cfg, out / "config.txt");
  std::cout << "steps " << result.state.step << " checkpoint " << ckpt_path.string() << '\n';
  return 0;
}

OffsetModel model_for(const std::string& checkpoint, bool oracle, const RunConfig& cfg,
                      std::optional<SetNetwork>& holder) {
  if (oracle) return exact_registration_model();
  if (checkpoint.empty()) throw Error(ErrorCode::invalid_argument, "--checkpoint is required (or pass --oracle)");
  Checkpoint ck = load_checkpoint(checkpoint);
  holder.emplace(ck.net_config, std::move(ck.params));
  (void)cfg;
  return as_offset_model(*holder);
}

void print_report(const std::string& label, const RmseReport& r) {
  std::printf("%s rmse_x %.4f rmse_y %.4f rmse_phi_deg %.4f n %zu\n", label.c_str(), r.rmse_x, r.rmse_y,
              r.rmse_phi_deg, r.n_samples);
}

int cmd_eval(const RunConfig& cfg, const fs::path& world_dir, const std::string& checkpoint, const std::string& mode,
             bool oracle, const fs::path& out) {
  const bool synthetic = mode == "synthetic";
  const InferMode infer_mode = synthetic ? InferMode::gps_only : parse_infer_mode(mode);
  const World world = load_world(world_dir, cfg);
  std::optional<SetNetwork> net;
  const OffsetModel model = model_for(checkpoint, oracle, cfg, net);
  ensure_dir(out);

  if (synthetic) {
    const RmseReport r = evaluate_synthetic(model, world.map, world.trajectory, cfg.eval_config());
    save_rmse_report(r, out / "report_synthetic.csv");
    print_report("synthetic", r);
    return 0;
  }

  SequenceOptions opts;
  opts.sensor = cfg.sensor;
  opts.ekf = cfg.ekf_config();
  opts.load_radius = cfg.train.load_radius;
  if (!oracle && (infer_mode == InferMode::net_ekf || infer_mode == InferMode::net_ekf_gps)) {
    SyntheticEvalConfig val = cfg.eval_config();
    val.sensor.lambda_clutter = val.sensor.lambda_miss = val.sensor.sigma_syn = 0;
    opts.ekf.set_net_calibration(calibrate_synthetic(model, world.map, world.trajectory, val));
  }
  Trajectory seq = world.trajectory;
  const auto n = std::min<std::size_t>(seq.points.size(), static_cast<std::size_t>(cfg.sequence_steps));
  seq.points.resize(n);
  const SequenceResult res = run_sequence(infer_mode, model, world.map, seq, opts, Rng(cfg.seed));
  const RmseReport r = rmse(res.estimates, res.truths);
  save_estimates(res, out / ("estimates_" + mode + ".csv"));
  save_rmse_report(r, out / ("report_" + mode + ".csv"));
  print_report(mode, r);
  std::printf("dead_reckoned_fraction %.4f\n", res.dead_reckoned_fraction());
  return 0;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    const std::string item = text.substr(start, end - start);
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) {
      throw Error(ErrorCode::invalid_argument, "--grid: '" + text + "' is not a comma-separated list of numbers");
    }
    grid.push_back(v);
    start = end + 1;
  }
  return grid;
}

int cmd_sweep(const RunConfig& cfg, const fs::path& world_dir, const std::string& checkpoint,
              const std::string& variable, const std::optional<std::string>& grid_text, bool oracle,
              const fs::path& out) {
  SweepSpec spec;
  spec.variable = parse_sweep_variable(variable);
  spec.grid = grid_text ? parse_grid(*grid_text) : SweepSpec::default_grid(spec.variable);
  spec.trials = cfg.eval_trials;
  spec.seed = cfg.eval_seed;
  spec.validate();
  const World world = load_world(world_dir, cfg);
  std::optional<SetNetwork> net;
  const OffsetModel model = model_for(checkpoint, oracle, cfg, net);
  ensure_dir(out);
  const auto rows = run_sweep(spec, model, world.map, world.trajectory, cfg.eval_config());
  emit_report(rows, variable, out / ("sweep_" + variable + ".csv"), ReportFormat::csv);
  emit_report(rows, variable, out / ("sweep_" + variable + ".svg"), ReportFormat::svg);
  for (const auto& r : rows) {
    char label[64];
    std::snprintf(label, sizeof(label), "%s=%g", variable.c_str(), r.value);
    print_report(label, r.report);
  }
  return 0;
}

int cmd_bench(const RunConfig& cfg, const std::string& checkpoint, bool with_mcl) {
  if (checkpoint.empty()) throw Error(ErrorCode::invalid_argument, "--checkpoint is required");
  Checkpoint ck = load_checkpoint(checkpoint);
  const SetNetwork net(ck.net_config, std::move(ck.params));
  const BenchInputs inputs = make_bench_inputs(cfg.bench_points, cfg.bench_points, cfg.seed);
  const TimingStats t = bench_inference(net, inputs, cfg.bench_repetitions);
  std::printf("network mean_ms %.4f p95_ms %.4f reps %d\n", t.mean_ms, t.p95_ms, t.repetitions);
  if (with_mcl) {
    const int reps = std::max(1, cfg.bench_repetitions / 10);
    const TimingStats m = bench_mcl(inputs, static_cast<std::size_t>(cfg.mcl_particles), reps, 2, cfg.seed);
    std::printf("mcl mean_ms %.4f p95_ms %.4f reps %d particles %d\n", m.mean_ms, m.p95_ms, m.repetitions,
                cfg.mcl_particles);
    std::printf("speedup %.2f\n", m.mean_ms / t.mean_ms);
  }
  return 0;
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return kExitUsage;
    case ErrorCode::numeric:
    case ErrorCode::no_landmarks: return kExitNumeric;
    default: return kExitIo;
  }
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Landmark-set pose correction: world generation, training, evaluation"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string out = "out";
  std::string world_dir;
  std::string checkpoint;
  std::string resume;
  std::string mode = "synthetic";
  std::string variable;
  std::optional<std::string> grid;
  bool oracle = false;
  bool with_mcl = false;

  auto* gen = app.add_subcommand("gen-world", "Generate a landmark map and trajectory");
  add_common(gen, common);
  gen->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train the set network");
  add_common(train, common);
  train->add_option("--world", world_dir, "Directory holding map.csv and trajectory.csv")->required();
  train->add_option("--out", out, "Output directory")->required();
  train->add_option("--resume", resume, "Continue from this checkpoint");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval, common);
  eval->add_option("--world", world_dir, "World directory")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file");
  eval->add_option("--mode", mode, "synthetic, gps_only, gps_net, net_only, net_ekf or net_ekf_gps");
  eval->add_flag("--oracle", oracle, "Use exact point-set registration instead of the network");
  eval->add_option("--out", out, "Output directory");

  auto* sweep = app.add_subcommand("sweep", "Robustness sweep over one impairment");
  add_common(sweep, common);
  sweep->add_option("--world", world_dir, "World directory")->required();
  sweep->add_option("--checkpoint", checkpoint, "Checkpoint file");
  sweep->add_option("--variable", variable, "clutter, miss, noise or combined")->required();
  sweep->add_option("--grid", grid, "Comma-separated grid values (default per variable)");
  sweep->add_flag("--oracle", oracle, "Use exact point-set registration instead of the network");
  sweep->add_option("--out", out, "Output directory");

  auto* bench = app.add_subcommand("bench", "Time the network correction");
  add_common(bench, common);
  bench->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  bench->add_flag("--mcl", with_mcl, "Also time the particle-filter baseline");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << '\n';
    return kExitUsage;
  }

  try {
    const RunConfig cfg = build_config(common);
    if (*gen) return cmd_gen_world(cfg, out);
    if (*train) return cmd_train(cfg, world_dir, out, resume);
    if (*eval) return cmd_eval(cfg, world_dir, checkpoint, mode, oracle, out);
    if (*sweep) return cmd_sweep(cfg, world_dir, checkpoint, variable, grid, oracle, out);
    if (*bench) return cmd_bench(cfg, checkpoint, with_mcl);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << one_line(e.what()) << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: io: " << one_line(e.what()) << '\n';
    return kExitIo;
  }
  return kExitUsage;
}
