// Command-line front end: gait optimization, library build, sampling, replay,
// training, evaluation and CSV export, all driven by one config file.
//
// Exit codes: 0 ok, 1 usage/config/file errors, 2 solver or training
// failure, 3 evaluation thresholds missed.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "aslip/config.hpp"
#include "aslip/library.hpp"
#include "aslip/ppo.hpp"
#include "aslip/simenv.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace aslip;

namespace {

enum Exit { kOk = 0, kUsage = 1, kSolver = 2, kAcceptance = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits = 4) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string speed_tag(double v) { return fixed(v, 2); }

void check_speed(double v) {
  if (!(v >= 0.0 && v <= 2.0)) throw UsageError("speed " + num(v) + " m/s is outside [0, 2]");
}

struct Context {
  ToolkitConfig cfg;
  std::string fingerprint;

  std::vector<std::string> header(const std::string& kind) const {
    return {"format_version " + std::to_string(kOutputFormatVersion), "kind " + kind, "config_fingerprint " + fingerprint};
  }
  fs::path out_path(const std::string& given, const std::string& fallback) const {
    fs::path p = given.empty() ? fs::path(cfg.output_dir) / fallback : fs::path(given);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p;
  }
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + p.string() + "'");
  return out;
}

void write_json(const fs::path& p, const json& doc) {
  std::ofstream out = open_out(p);
  out << doc.dump(1) << '\n';
}

json stamp(const Context& ctx, const std::string& kind) {
  return {{"format_version", kOutputFormatVersion}, {"kind", kind}, {"config_fingerprint", ctx.fingerprint}};
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("--") + what + " is required");
  if (!fs::exists(path)) throw UsageError(std::string(what) + " file '" + path + "' does not exist");
}

std::shared_ptr<const GaitLibrary> open_library(const Context& ctx, const std::string& path) {
  require_file(path, "library");
  return std::make_shared<const GaitLibrary>(load_library(path, &ctx.cfg.model));
}

json vec_json(const Vec3& v) { return {v.x, v.y, v.z}; }

// ---- commands ----------------------------------------------------------------

int cmd_optimize(Context& ctx, double speed, const std::string& out_arg) {
  check_speed(speed);
  const auto t0 = std::chrono::steady_clock::now();
  OptimizedGait og;
  try {
    og = optimize_gait(ctx.cfg.model, speed, ctx.cfg.gait);
  } catch (const GaitSolveError& e) {
    std::cerr << "optimize: " << e.what() << '\n';
    return kSolver;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const GaitAudit a = audit_gait(ctx.cfg.model, og.gait);
  const fs::path out = ctx.out_path(out_arg, "gait_" + speed_tag(speed) + ".json");
  save_gait(og.gait, ctx.cfg.model, out.string(), ctx.fingerprint);

  json rep = stamp(ctx, "solve_report");
  rep["speed"] = speed;
  rep["status"] = nlp::to_string(og.report.status);
  rep["objective"] = og.report.objective;
  rep["max_violation"] = og.report.max_violation;
  rep["stationarity"] = og.report.stationarity;
  rep["outer_iterations"] = og.report.outer_iterations;
  rep["inner_iterations"] = og.report.inner_iterations;
  rep["period"] = og.gait.period;
  rep["stride"] = og.gait.stride;
  rep["mean_speed"] = og.gait.stride / og.gait.period;
  rep["audit"] = {{"periodicity_error", a.periodicity_error},
                  {"half_cycle_error", a.half_cycle_error},
                  {"mean_speed_error", a.mean_speed_error},
                  {"min_vertical_grf", a.min_vertical_grf}};
  fs::path rp = out;
  rp.replace_extension();
  rp += "_report.json";
  write_json(rp, rep);

  std::cout << "speed " << fixed(speed, 2) << " m/s: " << nlp::to_string(og.report.status) << ", cost "
            << sci(og.report.objective) << ", violation " << num(og.report.max_violation) << ", period "
            << fixed(og.gait.period) << " s, stride " << fixed(og.gait.stride) << " m, mean speed "
            << fixed(og.gait.stride / og.gait.period, 6) << " m/s\n"
            << "wrote " << out.string() << " and " << rp.string() << '\n';
  std::cerr << "solve time " << fixed(secs, 2) << " s\n";
  return kOk;
}

int cmd_library(Context& ctx, const std::string& out_arg) {
  const std::vector<double> speeds = ctx.cfg.library.speeds();
  const auto t0 = std::chrono::steady_clock::now();
  GaitLibrary lib;
  try {
    lib = build_library(ctx.cfg.model, speeds, ctx.cfg.gait, [&](const OptimizedGait& og) {
      std::cout << "  " << fixed(og.gait.speed, 2) << " m/s  cost " << sci(og.report.objective) << "  violation "
                << num(og.report.max_violation) << "  period " << fixed(og.gait.period) << " s\n";
    });
  } catch (const GaitSolveError& e) {
    std::cerr << "library: " << e.what() << '\n';
    return kSolver;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (double v : lib.stride_decreases())
    std::cout << "warning: stride at " << fixed(v, 2) << " m/s is shorter than at the previous speed\n";
  const fs::path out = ctx.out_path(out_arg, "library.json");
  save_library(lib, out.string(), ctx.fingerprint);
  std::cout << "wrote " << lib.gaits.size() << " gaits to " << out.string() << '\n';
  std::cerr << "build time " << fixed(secs, 2) << " s\n";
  return kOk;
}

int cmd_sample(Context& ctx, const std::string& lib_path, double speed, double phase, const std::string& out_arg) {
  check_speed(speed);
  if (!(phase >= 0.0 && phase <= 1.0)) throw UsageError("phase must lie in [0, 1]");
  const auto lib = open_library(ctx, lib_path);
  const ReferenceFrame f = sample(*lib, speed, phase);
  json doc = stamp(ctx, "reference_frame");
  doc["phase"] = f.phase;
  doc["speed"] = f.speed;
  doc["speed_clamped"] = f.speed_clamped;
  doc["label"] = to_string(f.label);
  doc["body_pos"] = vec_json(f.body_pos);
  doc["body_vel"] = vec_json(f.body_vel);
  doc["foot_pos"] = {vec_json(f.foot_pos[0]), vec_json(f.foot_pos[1])};
  doc["foot_vel"] = {vec_json(f.foot_vel[0]), vec_json(f.foot_vel[1])};
  doc["setpoint"] = f.setpoint;
  doc["setpoint_rate"] = f.setpoint_rate;
  doc["input"] = f.input;
  json angles = json::array();
  for (const JointAngles& q : f.baseline) angles.push_back({{"roll", q.roll}, {"pitch", q.pitch}, {"knee", q.knee}});
  doc["baseline"] = angles;
  if (out_arg.empty()) {
    std::cout << doc.dump(1) << '\n';
  } else {
    write_json(ctx.out_path(out_arg, ""), doc);
  }
  return kOk;
}

GaitTrajectory pick_gait(const Context& ctx, const std::string& lib_path, const std::string& gait_path,
                         std::optional<double> speed, ModelParams* params) {
  if (!gait_path.empty()) {
    require_file(gait_path, "gait");
    *params = ctx.cfg.model;
    return load_gait(gait_path, &ctx.cfg.model);
  }
  if (!speed) throw UsageError("--speed is required with --library");
  check_speed(*speed);
  const auto lib = open_library(ctx, lib_path);
  *params = lib->params;
  for (const GaitTrajectory& g : lib->gaits)
    if (std::abs(g.speed - *speed) < 1e-9) return g;
  throw UsageError("speed " + num(*speed) + " m/s is not a library grid speed");
}

int cmd_replay(Context& ctx, const std::string& lib_path, const std::string& gait_path, std::optional<double> speed,
               const std::string& out_arg) {
  ModelParams params;
  const GaitTrajectory gait = pick_gait(ctx, lib_path, gait_path, speed, &params);
  const ReplayLog log = rollout_open_loop(params, gait);
  const GrfHumps h = stance_grf_humps(log);
  std::vector<std::string> header = ctx.header("replay");
  header.push_back("speed " + num(gait.speed));
  header.push_back("max_body_deviation " + num(log.max_body_deviation));
  header.push_back("max_knot_deviation " + num(log.max_knot_deviation));
  header.push_back("min_vertical_grf " + num(log.min_vertical_grf));
  header.push_back("grf_dip " + num(h.dip()));
  const fs::path out = ctx.out_path(out_arg, "replay_" + speed_tag(gait.speed) + ".csv");
  std::ofstream f = open_out(out);
  write_replay_csv(log, f, header);

  std::cout << "replay at " << fixed(gait.speed, 2) << " m/s: body deviation " << fixed(log.max_body_deviation * 1e3)
            << " mm, min vertical GRF " << fixed(log.min_vertical_grf, 2) << " N, mean velocity "
            << fixed(log.mean_forward_velocity) << " m/s\n";
  if (h.found)
    std::cout << "stance GRF peaks " << fixed(h.first_peak, 2) << " / " << fixed(h.second_peak, 2) << " N, valley "
              << fixed(h.valley, 2) << " N (dip " << fixed(100 * h.dip(), 2) << "%)\n";
  else
    std::cout << "stance GRF has a single peak\n";
  if (log.contact_fault) std::cout << "warning: a stance leg pulled on the ground\n";
  std::cout << "wrote " << out.string() << '\n';
  return kOk;
}

int cmd_train(Context& ctx, const std::string& lib_path, const std::string& out_arg, const std::string& resume_path) {
  const auto lib = open_library(ctx, lib_path);
  const fs::path dir = out_arg.empty() ? fs::path(ctx.cfg.output_dir) / "train" : fs::path(out_arg);
  fs::create_directories(dir);

  std::optional<rl::Agent> resume;
  if (!resume_path.empty()) {
    require_file(resume_path, "resume");
    resume = rl::load_checkpoint(resume_path);
  }
  rl::TrainOptions opts;
  opts.total_steps = ctx.cfg.train.total_steps;
  opts.workers = ctx.cfg.train.workers;
  opts.seed = ctx.cfg.seed;
  const SimConfig sim = ctx.cfg.sim;
  const double vmin = ctx.cfg.train.speed_min, vmax = ctx.cfg.train.speed_max;
  const rl::EnvFactory factory = [&](int) { return std::make_unique<rl::WalkTask>(lib, sim, vmin, vmax); };

  std::vector<rl::IterationLog> curve;
  const int every = ctx.cfg.train.checkpoint_every;
  opts.on_iteration = [&](const rl::IterationLog& l, const rl::Agent& a) {
    curve.push_back(l);
    std::cout << "update " << l.iteration + 1 << "  steps " << l.steps << "  episode reward "
              << fixed(l.mean_episode_reward, 2) << "  length " << fixed(l.mean_episode_length, 1) << "  step reward "
              << fixed(l.mean_step_reward) << '\n';
    std::cout.flush();
    if (every > 0 && (l.iteration + 1) % every == 0)
      rl::save_checkpoint(a, ctx.cfg.ppo, (dir / ("checkpoint_" + std::to_string(l.iteration + 1) + ".json")).string(),
                          ctx.fingerprint);
  };
  rl::Agent agent;
  try {
    agent = rl::train(factory, ctx.cfg.ppo, opts, resume ? &*resume : nullptr).agent;
  } catch (const rl::TrainingDiverged& e) {
    std::cerr << "train: " << e.what() << '\n';
    return kSolver;
  }
  rl::save_checkpoint(agent, ctx.cfg.ppo, (dir / "checkpoint.json").string(), ctx.fingerprint);
  std::ofstream f = open_out(dir / "curve.csv");
  rl::write_curve_csv(curve, f, ctx.header("learning_curve"));
  std::cout << "trained " << agent.steps << " steps; wrote " << (dir / "checkpoint.json").string() << " and "
            << (dir / "curve.csv").string() << '\n';
  return kOk;
}

int cmd_eval(Context& ctx, const std::string& lib_path, const std::string& ckpt_path, const std::string& out_arg,
             const std::string& report_arg) {
  const auto lib = open_library(ctx, lib_path);
  require_file(ckpt_path, "checkpoint");
  const rl::Agent agent = rl::load_checkpoint(ckpt_path);
  for (const EvalSegment& s : ctx.cfg.eval.script) check_speed(s.speed);

  std::vector<StepRecord> rows;
  const std::vector<rl::EvalReport> reps =
      rl::evaluate_script(agent, lib, ctx.cfg.sim, ctx.cfg.eval.script, ctx.cfg.seed, &rows);

  const fs::path out = ctx.out_path(out_arg, "eval.csv");
  {
    std::ofstream f = open_out(out);
    write_step_csv(rows, f, ctx.header("tracking"));
  }

  const EvalSettings& es = ctx.cfg.eval;
  bool ok = true;
  json segs = json::array();
  std::cout << "segment  command  survived  step reward  mean speed  speed error  touchdowns  touchdown error\n";
  for (std::size_t k = 0; k < reps.size(); ++k) {
    const rl::EvalReport& r = reps[k];
    const bool reward_ok = r.mean_step_reward >= es.min_step_reward;
    const bool speed_ok = r.speed_error <= es.max_speed_error && !r.fell;
    const bool placement_scored = r.commanded_speed <= 1.0 && r.touchdowns > 0;
    const bool placement_ok = r.mean_touchdown_error <= es.touchdown_target;
    ok = ok && reward_ok && speed_ok;
    char line[200];
    std::snprintf(line, sizeof line, "%7zu  %7.3f  %4d/%-4d  %11.4f  %10.4f  %11.4f  %10d  %15.4f", k,
                  r.commanded_speed, r.survived, r.horizon, r.mean_step_reward, r.mean_speed, r.speed_error,
                  r.touchdowns, r.mean_touchdown_error);
    std::cout << line << (reward_ok && speed_ok ? "" : "  FAIL")
              << (placement_scored && !placement_ok ? "  placement WARN" : "") << '\n';
    segs.push_back({{"commanded_speed", r.commanded_speed},
                    {"horizon", r.horizon},
                    {"survived", r.survived},
                    {"fell", r.fell},
                    {"mean_step_reward", r.mean_step_reward},
                    {"mean_speed", r.mean_speed},
                    {"speed_error", r.speed_error},
                    {"touchdowns", r.touchdowns},
                    {"mean_touchdown_error", r.mean_touchdown_error},
                    {"reward_pass", reward_ok},
                    {"speed_pass", speed_ok},
                    {"placement", placement_scored ? (placement_ok ? "pass" : "warn") : "n/a"}});
  }
  json doc = stamp(ctx, "eval_report");
  doc["checkpoint_steps"] = agent.steps;
  doc["thresholds"] = {{"min_step_reward", es.min_step_reward},
                       {"max_speed_error", es.max_speed_error},
                       {"touchdown_target", es.touchdown_target}};
  doc["segments"] = segs;
  doc["pass"] = ok;
  const fs::path rp = ctx.out_path(report_arg, "eval_report.json");
  write_json(rp, doc);
  std::cout << (ok ? "PASS" : "FAIL") << ": wrote " << out.string() << " and " << rp.string() << '\n';
  return ok ? kOk : kAcceptance;
}

int cmd_export(Context& ctx, const std::string& lib_path, const std::string& gait_path, const std::string& out_arg) {
  std::vector<GaitTrajectory> gaits;
  if (!gait_path.empty()) {
    require_file(gait_path, "gait");
    gaits.push_back(load_gait(gait_path, &ctx.cfg.model));
  } else {
    gaits = open_library(ctx, lib_path)->gaits;
  }
  const fs::path dir = out_arg.empty() ? fs::path(ctx.cfg.output_dir) / "csv" : fs::path(out_arg);
  fs::create_directories(dir);
  for (const GaitTrajectory& g : gaits) {
    const fs::path p = dir / ("gait_" + speed_tag(g.speed) + ".csv");
    std::ofstream f = open_out(p);
    std::vector<std::string> header = ctx.header("gait");
    header.push_back("speed " + num(g.speed));
    header.push_back("period " + num(g.period));
    header.push_back("stride " + num(g.stride));
    write_gait_csv(g, f, header);
    std::cout << "wrote " << p.string() << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reduced-order walking toolkit: gait library, replay and learned tracking control"};
  app.require_subcommand(1);
  std::string config_path;
  if (const char* env = std::getenv("ASLIP_CONFIG")) config_path = env;
  app.add_option("-c,--config", config_path, "JSON config file (default: $ASLIP_CONFIG, else built-in defaults)");
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Override the config seed");

  std::string out, library, gait, checkpoint, resume, report;
  double speed_value = 0.0, phase = 0.0, seconds = 10.0;
  std::optional<double> speed;
  std::optional<long long> steps;

  auto* optimize = app.add_subcommand("optimize", "Solve one periodic gait");
  optimize->add_option("--speed", speed_value, "Mean forward speed, m/s")->required();
  optimize->add_option("-o,--out", out, "Gait file (JSON)");

  auto* lib_cmd = app.add_subcommand("library", "Solve the configured speed grid and write a library");
  lib_cmd->add_option("-o,--out", out, "Library file (JSON)");

  auto* sample_cmd = app.add_subcommand("sample", "Print the reference at a speed and phase");
  sample_cmd->add_option("-l,--library", library)->required();
  sample_cmd->add_option("--speed", speed_value)->required();
  sample_cmd->add_option("--phase", phase)->required();
  sample_cmd->add_option("-o,--out", out, "Write JSON here instead of stdout");

  auto* replay = app.add_subcommand("replay", "Integrate a gait open loop and write states and GRFs");
  replay->add_option("-l,--library", library);
  replay->add_option("-g,--gait", gait);
  replay->add_option("--speed", speed, "Library grid speed");
  replay->add_option("-o,--out", out, "CSV file");

  auto* train_cmd = app.add_subcommand("train", "Train a tracking policy with PPO");
  train_cmd->add_option("-l,--library", library)->required();
  train_cmd->add_option("-o,--out-dir", out, "Directory for checkpoints and the learning curve");
  train_cmd->add_option("--resume", resume, "Checkpoint to continue from");
  train_cmd->add_option("--steps", steps, "Override train.total_steps");

  auto* eval_cmd = app.add_subcommand("eval", "Run a policy over the speed script and report tracking");
  eval_cmd->add_option("-l,--library", library)->required();
  eval_cmd->add_option("-p,--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--speed", speed, "Replace the script by one segment at this speed");
  eval_cmd->add_option("--seconds", seconds, "Segment length with --speed");
  eval_cmd->add_option("-o,--out", out, "Tracking CSV");
  eval_cmd->add_option("--report", report, "Summary JSON");

  auto* export_cmd = app.add_subcommand("export", "Convert a gait or library file to CSV");
  export_cmd->add_option("-l,--library", library);
  export_cmd->add_option("-g,--gait", gait);
  export_cmd->add_option("-o,--out-dir", out);

  auto* config_cmd = app.add_subcommand("config", "Print the resolved config and its fingerprint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    Context ctx;
    if (!config_path.empty()) ctx.cfg = load_config(config_path);
    if (seed) ctx.cfg.seed = *seed;
    if (steps) ctx.cfg.train.total_steps = *steps;
    if (eval_cmd->parsed() && speed) ctx.cfg.eval.script = {EvalSegment{*speed, seconds}};
    ctx.cfg.validate();
    ctx.fingerprint = config_fingerprint(ctx.cfg);

    if (optimize->parsed()) return cmd_optimize(ctx, speed_value, out);
    if (lib_cmd->parsed()) return cmd_library(ctx, out);
    if (sample_cmd->parsed()) return cmd_sample(ctx, library, speed_value, phase, out);
    if (replay->parsed()) {
      if (library.empty() == gait.empty()) throw UsageError("replay needs exactly one of --library or --gait");
      return cmd_replay(ctx, library, gait, speed, out);
    }
    if (train_cmd->parsed()) return cmd_train(ctx, library, out, resume);
    if (eval_cmd->parsed()) return cmd_eval(ctx, library, checkpoint, out, report);
    if (export_cmd->parsed()) {
      if (library.empty() == gait.empty()) throw UsageError("export needs exactly one of --library or --gait");
      return cmd_export(ctx, library, gait, out);
    }
    if (config_cmd->parsed()) {
      std::cout << dump_config(ctx.cfg) << "\nconfig_fingerprint " << ctx.fingerprint << '\n';
      return kOk;
    }
  } catch (const GaitSolveError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
