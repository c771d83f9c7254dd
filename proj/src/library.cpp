#include "aslip/library.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "aslip/swing.hpp"

namespace aslip {

using nlohmann::json;

namespace {

int side_index(Side s) { return s == Side::Left ? 0 : 1; }

Vec3 mirrored(const Vec3& p) { return {p.x, -p.y, p.z}; }

Phase mirrored(Phase p) {
  switch (p) {
    case Phase::SingleStanceLeft:
      return Phase::SingleStanceRight;
    case Phase::SingleStanceRight:
      return Phase::SingleStanceLeft;
    default:
      return Phase::DoubleStance;
  }
}

// Continuous-time view of one optimized half cycle: quadratic state
// interpolation consistent with the trapezoid rule, linear inputs, swing foot
// on a minimum-jerk profile.
class HalfStep {
 public:
  HalfStep(const GaitNlp& nlp, const Eigen::VectorXd& z, double clearance)
      : nlp_(nlp), d_(nlp.unpack(z)), knots_single_(nlp.schedule().phases[0].knots) {
    t_single_ = d_.durations[0];
    t_double_ = d_.durations[1];
    step_ = d_.right_foothold.x - d_.left_foothold.x;
    const int n = static_cast<int>(d_.knots.size());
    times_.resize(n);
    for (int k = 0; k < n; ++k) {
      times_[k] = k < knots_single_ - 1
                      ? t_single_ * k / (knots_single_ - 1)
                      : t_single_ + t_double_ * (k - (knots_single_ - 1)) / (n - knots_single_);
    }
    // The right foot lifts off where the trailing foot of the previous step
    // was planted, one full stride behind its touchdown.
    const Vec3 liftoff{d_.right_foothold.x - 2.0 * step_, d_.right_foothold.y, d_.right_foothold.z};
    swing_ = SwingProfile(liftoff, d_.right_foothold, t_single_, clearance);
  }

  double duration() const { return t_single_ + t_double_; }
  double step() const { return step_; }
  const GaitDecision& decision() const { return d_; }
  const std::vector<double>& times() const { return times_; }
  double single() const { return t_single_; }
  double dbl() const { return t_double_; }
  Vec3 right_liftoff() const { return swing_.position(0.0); }

  Phase label(double t) const { return t < t_single_ ? Phase::SingleStanceLeft : Phase::DoubleStance; }

  void state(double t, KnotState& x, KnotInput& u) const {
    const int n = static_cast<int>(d_.knots.size());
    int k;
    if (t < t_single_) {
      k = std::min(static_cast<int>(t / (t_single_ / (knots_single_ - 1))), knots_single_ - 2);
    } else {
      const double h = t_double_ / (n - knots_single_);
      k = knots_single_ - 1 + std::min(static_cast<int>((t - t_single_) / h), n - knots_single_ - 1);
    }
    k = std::clamp(k, 0, n - 2);
    const Phase ph = nlp_.interval_phase(k);
    const KnotPoint &a = d_.knots[k], &b = d_.knots[k + 1];
    const double h = times_[k + 1] - times_[k];
    const double tau = t - times_[k];
    const ModelParams& p = nlp_.params();
    const KnotState fa = knot_rate(p, a.x, a.u, ph, d_.left_foothold, d_.right_foothold);
    const KnotState fb = knot_rate(p, b.x, b.u, ph, d_.left_foothold, d_.right_foothold);
    x = a.x + fa * tau + (fb - fa) * (tau * tau / (2.0 * h));
    u = a.u + (b.u - a.u) * (tau / h);
  }

  void foot(Side s, double t, Vec3& pos, Vec3& vel) const {
    if (s == Side::Left) {
      pos = d_.left_foothold;
      vel = {};
    } else if (t < t_single_) {
      pos = swing_.position(t);
      vel = swing_.velocity(t);
    } else {
      pos = d_.right_foothold;
      vel = {};
    }
  }

 private:
  const GaitNlp& nlp_;
  GaitDecision d_;
  int knots_single_;
  double t_single_ = 0.0, t_double_ = 0.0, step_ = 0.0;
  std::vector<double> times_;
  SwingProfile swing_;
};

Vec3 lerp(const Vec3& a, const Vec3& b, double w) { return a + (b - a) * w; }
double lerp(double a, double b, double w) { return a + (b - a) * w; }
JointAngles lerp(const JointAngles& a, const JointAngles& b, double w) {
  return {lerp(a.roll, b.roll, w), lerp(a.pitch, b.pitch, w), lerp(a.knee, b.knee, w)};
}

ReferenceFrame blend(const ReferenceFrame& a, const ReferenceFrame& b, double w) {
  ReferenceFrame r = w < 0.5 ? a : b;
  r.body_pos = lerp(a.body_pos, b.body_pos, w);
  r.body_vel = lerp(a.body_vel, b.body_vel, w);
  for (int s = 0; s < 2; ++s) {
    r.foot_pos[s] = lerp(a.foot_pos[s], b.foot_pos[s], w);
    r.foot_vel[s] = lerp(a.foot_vel[s], b.foot_vel[s], w);
    r.setpoint[s] = lerp(a.setpoint[s], b.setpoint[s], w);
    r.setpoint_rate[s] = lerp(a.setpoint_rate[s], b.setpoint_rate[s], w);
    r.input[s] = lerp(a.input[s], b.input[s], w);
    r.baseline[s] = lerp(a.baseline[s], b.baseline[s], w);
  }
  r.speed = lerp(a.speed, b.speed, w);
  return r;
}

// ---- serialization ----------------------------------------------------------

json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw LibraryFormatError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vecs_json(const std::vector<Vec3>& vs) {
  json a = json::array();
  for (const Vec3& v : vs) a.push_back(vec_json(v));
  return a;
}

std::vector<Vec3> vecs_from(const json& j) {
  std::vector<Vec3> out;
  for (const json& e : j) out.push_back(vec_from(e));
  return out;
}

json params_json(const ModelParams& p) {
  return {{"mass", p.mass},
          {"stiffness", p.stiffness},
          {"damping", p.damping},
          {"actuator_inertia", p.actuator_inertia},
          {"gravity", p.gravity},
          {"fingerprint", fingerprint(p)}};
}

ModelParams params_from(const json& j, const ModelParams* expected) {
  ModelParams p;
  p.mass = j.at("mass").get<double>();
  p.stiffness = j.at("stiffness").get<double>();
  p.damping = j.at("damping").get<double>();
  p.actuator_inertia = j.at("actuator_inertia").get<double>();
  p.gravity = j.at("gravity").get<double>();
  const std::string stored = j.at("fingerprint").get<std::string>();
  if (stored != fingerprint(p)) throw LibraryFormatError("model parameter fingerprint does not match its values");
  if (expected && fingerprint(*expected) != stored)
    throw LibraryFormatError("file was built for model parameters " + stored + ", expected " +
                             fingerprint(*expected));
  return p;
}

json gait_json(const GaitTrajectory& g) {
  json samples;
  samples["phase"] = g.phase;
  samples["body_pos"] = vecs_json(g.body_pos);
  samples["body_vel"] = vecs_json(g.body_vel);
  samples["left_foot_pos"] = vecs_json(g.foot_pos[0]);
  samples["right_foot_pos"] = vecs_json(g.foot_pos[1]);
  samples["left_foot_vel"] = vecs_json(g.foot_vel[0]);
  samples["right_foot_vel"] = vecs_json(g.foot_vel[1]);
  json labels = json::array();
  for (Phase p : g.label) labels.push_back(to_string(p));
  samples["label"] = labels;
  samples["left_setpoint"] = g.setpoint[0];
  samples["right_setpoint"] = g.setpoint[1];
  samples["left_setpoint_rate"] = g.setpoint_rate[0];
  samples["right_setpoint_rate"] = g.setpoint_rate[1];
  samples["left_input"] = g.input[0];
  samples["right_input"] = g.input[1];

  json angles = json::array();
  for (const auto& q : g.baseline) {
    angles.push_back(json::array({q[0].roll, q[0].pitch, q[0].knee, q[1].roll, q[1].pitch, q[1].knee}));
  }
  json steps = json::array();
  for (const Footstep& f : g.footsteps) {
    steps.push_back({{"side", f.side == Side::Left ? "left" : "right"}, {"time", f.time},
                     {"position", vec_json(f.position)}});
  }
  json knots;
  knots["time"] = g.knot_time;
  json xs = json::array(), us = json::array();
  for (const KnotState& x : g.knot_state) xs.push_back(std::vector<double>(x.data(), x.data() + kStateDim));
  for (const KnotInput& u : g.knot_input) us.push_back(std::vector<double>(u.data(), u.data() + kInputDim));
  knots["state"] = xs;
  knots["input"] = us;

  return {{"speed", g.speed},
          {"period", g.period},
          {"stride", g.stride},
          {"single_duration", g.single_duration},
          {"double_duration", g.double_duration},
          {"initial_feet", json::array({vec_json(g.initial_foot[0]), vec_json(g.initial_foot[1])})},
          {"samples", samples},
          {"baseline_angles", angles},
          {"footsteps", steps},
          {"knots", knots}};
}

GaitTrajectory gait_from(const json& j) {
  GaitTrajectory g;
  g.speed = j.at("speed").get<double>();
  g.period = j.at("period").get<double>();
  g.stride = j.at("stride").get<double>();
  g.single_duration = j.at("single_duration").get<double>();
  g.double_duration = j.at("double_duration").get<double>();
  const json& feet = j.at("initial_feet");
  g.initial_foot[0] = vec_from(feet.at(0));
  g.initial_foot[1] = vec_from(feet.at(1));
  const json& s = j.at("samples");
  g.phase = s.at("phase").get<std::vector<double>>();
  g.body_pos = vecs_from(s.at("body_pos"));
  g.body_vel = vecs_from(s.at("body_vel"));
  g.foot_pos[0] = vecs_from(s.at("left_foot_pos"));
  g.foot_pos[1] = vecs_from(s.at("right_foot_pos"));
  g.foot_vel[0] = vecs_from(s.at("left_foot_vel"));
  g.foot_vel[1] = vecs_from(s.at("right_foot_vel"));
  for (const json& l : s.at("label")) g.label.push_back(phase_from_string(l.get<std::string>()));
  g.setpoint[0] = s.at("left_setpoint").get<std::vector<double>>();
  g.setpoint[1] = s.at("right_setpoint").get<std::vector<double>>();
  g.setpoint_rate[0] = s.at("left_setpoint_rate").get<std::vector<double>>();
  g.setpoint_rate[1] = s.at("right_setpoint_rate").get<std::vector<double>>();
  g.input[0] = s.at("left_input").get<std::vector<double>>();
  g.input[1] = s.at("right_input").get<std::vector<double>>();
  for (const json& a : j.at("baseline_angles")) {
    const auto v = a.get<std::vector<double>>();
    if (v.size() != 6) throw LibraryFormatError("baseline angle rows need six entries");
    g.baseline.push_back({JointAngles{v[0], v[1], v[2]}, JointAngles{v[3], v[4], v[5]}});
  }
  for (const json& f : j.at("footsteps")) {
    const std::string side = f.at("side").get<std::string>();
    if (side != "left" && side != "right") throw LibraryFormatError("unknown footstep side '" + side + "'");
    g.footsteps.push_back({side == "left" ? Side::Left : Side::Right, f.at("time").get<double>(),
                           vec_from(f.at("position"))});
  }
  const json& k = j.at("knots");
  g.knot_time = k.at("time").get<std::vector<double>>();
  for (const json& x : k.at("state")) {
    const auto v = x.get<std::vector<double>>();
    if (v.size() != kStateDim) throw LibraryFormatError("knot state has the wrong length");
    g.knot_state.push_back(Eigen::Map<const KnotState>(v.data()));
  }
  for (const json& u : k.at("input")) {
    const auto v = u.get<std::vector<double>>();
    if (v.size() != kInputDim) throw LibraryFormatError("knot input has the wrong length");
    g.knot_input.push_back(Eigen::Map<const KnotInput>(v.data()));
  }
  const std::size_t n = g.phase.size();
  const bool same = g.body_pos.size() == n && g.body_vel.size() == n && g.foot_pos[0].size() == n &&
                    g.foot_pos[1].size() == n && g.foot_vel[0].size() == n && g.foot_vel[1].size() == n &&
                    g.label.size() == n && g.setpoint[0].size() == n && g.setpoint[1].size() == n &&
                    g.setpoint_rate[0].size() == n && g.setpoint_rate[1].size() == n && g.input[0].size() == n &&
                    g.input[1].size() == n && g.baseline.size() == n;
  if (!same || n < 2) throw LibraryFormatError("gait sample arrays differ in length");
  if (g.knot_state.size() != g.knot_time.size() || g.knot_input.size() != g.knot_time.size())
    throw LibraryFormatError("knot arrays differ in length");
  return g;
}

json read_document(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LibraryFormatError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw LibraryFormatError("'" + path + "': parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

void check_version(const json& doc) {
  const int version = doc.at("format_version").get<int>();
  if (version != kLibraryFormatVersion)
    throw LibraryFormatError("unsupported format_version " + std::to_string(version) + " (expected " +
                             std::to_string(kLibraryFormatVersion) + ")");
}

void write_document(const json& doc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LibraryFormatError("cannot write '" + path + "'");
  out << doc.dump(1) << '\n';
  if (!out) throw LibraryFormatError("write to '" + path + "' failed");
}

template <typename Fn>
auto guarded(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const LibraryFormatError&) {
    throw;
  } catch (const json::exception& e) {
    throw LibraryFormatError("'" + path + "': " + e.what());
  } catch (const std::invalid_argument& e) {
    throw LibraryFormatError("'" + path + "': " + e.what());
  }
}

}  // namespace

AslipState GaitTrajectory::state_at(int i) const {
  AslipState s;
  s.r = body_pos[i];
  s.v = body_vel[i];
  s.phase = label[i];
  for (Side side : {Side::Left, Side::Right}) {
    const int j = side_index(side);
    LegState& leg = s.leg(side);
    leg.d = setpoint[j][i];
    leg.d_dot = setpoint_rate[j][i];
    leg.in_contact = in_stance(label[i], side);
    leg.foothold = foot_pos[j][i];
  }
  return s;
}

std::vector<double> GaitLibrary::speeds() const {
  std::vector<double> s;
  for (const GaitTrajectory& g : gaits) s.push_back(g.speed);
  return s;
}

void GaitLibrary::validate() const {
  if (gaits.empty()) throw std::invalid_argument("gait library is empty");
  for (std::size_t i = 1; i < gaits.size(); ++i) {
    if (!(gaits[i].speed > gaits[i - 1].speed)) throw std::invalid_argument("library speeds must strictly increase");
    if (gaits[i].samples() != gaits[0].samples())
      throw std::invalid_argument("library gaits must share one sample grid");
  }
}

std::vector<double> GaitLibrary::stride_decreases() const {
  std::vector<double> out;
  for (std::size_t i = 1; i < gaits.size(); ++i)
    if (gaits[i].stride < gaits[i - 1].stride) out.push_back(gaits[i].speed);
  return out;
}

GaitSolveError::GaitSolveError(double speed, nlp::SolveStatus status, double violation)
    : std::runtime_error([&] {
        char buf[160];
        std::snprintf(buf, sizeof buf, "gait optimization at %.3f m/s failed: %s (max violation %.3g)", speed,
                      nlp::to_string(status), violation);
        return std::string(buf);
      }()),
      speed_(speed),
      status_(status) {}

GaitTrajectory resample(const GaitNlp& nlp, const Eigen::VectorXd& z, const GaitOptions& opts) {
  if (opts.samples_per_cycle < 2 || opts.samples_per_cycle % 2 != 0)
    throw std::invalid_argument("samples per cycle must be an even number >= 2");
  opts.left_leg.validate();
  opts.right_leg.validate();
  const HalfStep half(nlp, z, opts.swing_clearance);
  const double T_half = half.duration();
  const double step = half.step();

  GaitTrajectory g;
  g.speed = nlp.target_speed();
  g.period = 2.0 * T_half;
  g.stride = 2.0 * step;
  g.single_duration = half.single();
  g.double_duration = half.dbl();

  const int N = opts.samples_per_cycle;
  const auto reserve = [&](auto& v) { v.reserve(N + 1); };
  reserve(g.phase);
  reserve(g.body_pos);
  reserve(g.body_vel);

  for (int i = 0; i <= N; ++i) {
    const double phase = static_cast<double>(i) / N;
    const double t = phase * g.period;
    const bool second = i >= N / 2;
    const double tau = second ? t - T_half : t;
    KnotState x;
    KnotInput u;
    half.state(tau, x, u);
    Phase label = half.label(tau);
    std::array<Vec3, 2> fp, fv;
    half.foot(Side::Left, tau, fp[0], fv[0]);
    half.foot(Side::Right, tau, fp[1], fv[1]);
    if (second) {
      // second step: mirror about the sagittal plane, swap legs, shift forward
      x = mirror_swap(x);
      x(0) += step;
      u = mirror_swap(u);
      label = mirrored(label);
      const std::array<Vec3, 2> p = fp, v = fv;
      fp = {mirrored(p[1]) + Vec3{step, 0, 0}, mirrored(p[0]) + Vec3{step, 0, 0}};
      fv = {mirrored(v[1]), mirrored(v[0])};
    }
    if (i == N) label = Phase::SingleStanceLeft;  // closes onto phase 0

    g.phase.push_back(phase);
    const Vec3 body{x(0), x(1), x(2)};
    g.body_pos.push_back(body);
    g.body_vel.push_back({x(3), x(4), x(5)});
    g.label.push_back(label);
    for (int s = 0; s < 2; ++s) {
      g.foot_pos[s].push_back(fp[s]);
      g.foot_vel[s].push_back(fv[s]);
      g.setpoint[s].push_back(x(6 + 2 * s));
      g.setpoint_rate[s].push_back(x(7 + 2 * s));
      g.input[s].push_back(u(s));
    }
    std::array<JointAngles, 2> q;
    try {
      q[0] = ik(opts.left_leg, fp[0] - body);
      q[1] = ik(opts.right_leg, fp[1] - body);
    } catch (const OutOfWorkspace& e) {
      throw OutOfWorkspace("sample " + std::to_string(i) + ": " + e.what());
    }
    g.baseline.push_back(q);
  }

  const GaitDecision& d = half.decision();
  g.initial_foot[0] = d.left_foothold;
  g.initial_foot[1] = half.right_liftoff();
  g.footsteps = {{Side::Right, half.single(), d.right_foothold},
                 {Side::Left, T_half + half.single(), mirrored(d.right_foothold) + Vec3{step, 0, 0}}};

  const std::vector<double>& times = half.times();
  const int n = static_cast<int>(times.size());
  for (int k = 0; k < n; ++k) {
    g.knot_time.push_back(times[k]);
    g.knot_state.push_back(d.knots[k].x);
    g.knot_input.push_back(d.knots[k].u);
  }
  for (int k = 1; k < n; ++k) {
    KnotState x = mirror_swap(d.knots[k].x);
    x(0) += step;
    g.knot_time.push_back(T_half + times[k]);
    g.knot_state.push_back(x);
    g.knot_input.push_back(mirror_swap(d.knots[k].u));
  }
  return g;
}

namespace {

nlp::SolveReport solve_speed(const ModelParams& params, double speed, const GaitOptions& opts,
                             const nlp::SolveReport* warm, GaitNlp** out_nlp, std::unique_ptr<GaitNlp>& holder) {
  holder = std::make_unique<GaitNlp>(params, speed, opts.schedule(), opts.bounds);
  *out_nlp = holder.get();
  const Eigen::VectorXd x0 = warm ? holder->warm_start_from(warm->x) : holder->initial_guess();
  return nlp::solve(holder->problem(), x0, opts.solver, warm ? &warm->multipliers : nullptr);
}

bool converged(const nlp::SolveReport& r) { return r.status == nlp::SolveStatus::Converged; }

}  // namespace

OptimizedGait optimize_gait(const ModelParams& params, double speed, const GaitOptions& opts) {
  std::unique_ptr<GaitNlp> holder;
  GaitNlp* nlp = nullptr;
  nlp::SolveReport r = solve_speed(params, speed, opts, nullptr, &nlp, holder);
  if (!converged(r)) {
    // continuation from standing
    nlp::SolveReport prev = solve_speed(params, 0.0, opts, nullptr, &nlp, holder);
    if (!converged(prev)) throw GaitSolveError(0.0, prev.status, prev.max_violation);
    const int increments = static_cast<int>(std::ceil(speed / 0.1 - 1e-9));
    for (int i = 1; i <= increments; ++i) {
      const double s = std::min(speed, 0.1 * i);
      prev = solve_speed(params, s, opts, &prev, &nlp, holder);
      if (!converged(prev)) throw GaitSolveError(s, prev.status, prev.max_violation);
    }
    r = std::move(prev);
  }
  if (!converged(r)) throw GaitSolveError(speed, r.status, r.max_violation);
  return {resample(*nlp, r.x, opts), std::move(r)};
}

OptimizedGait refine_gait(const ModelParams& params, const OptimizedGait& coarse, const GaitOptions& coarse_opts,
                          const GaitOptions& fine_opts) {
  const double speed = coarse.gait.speed;
  const GaitNlp from(params, speed, coarse_opts.schedule(), coarse_opts.bounds);
  const GaitNlp to(params, speed, fine_opts.schedule(), fine_opts.bounds);
  nlp::SolveReport r = nlp::solve(to.problem(), to.regrid_from(from, coarse.report.x), fine_opts.solver);
  if (!converged(r)) throw GaitSolveError(speed, r.status, r.max_violation);
  return {resample(to, r.x, fine_opts), std::move(r)};
}

GaitLibrary build_library(const ModelParams& params, const std::vector<double>& speeds, const GaitOptions& opts,
                          const std::function<void(const OptimizedGait&)>& progress) {
  if (speeds.empty()) throw std::invalid_argument("no speeds requested");
  for (std::size_t i = 1; i < speeds.size(); ++i)
    if (!(speeds[i] > speeds[i - 1])) throw std::invalid_argument("library speeds must be sorted and distinct");
  GaitLibrary lib;
  lib.params = params;
  nlp::SolveReport prev;
  for (std::size_t i = 0; i < speeds.size(); ++i) {
    OptimizedGait og;
    bool done = false;
    if (i > 0) {
      std::unique_ptr<GaitNlp> holder;
      GaitNlp* nlp = nullptr;
      nlp::SolveReport r = solve_speed(params, speeds[i], opts, &prev, &nlp, holder);
      if (converged(r)) {
        og = {resample(*nlp, r.x, opts), std::move(r)};
        done = true;
      }
    }
    if (!done) og = optimize_gait(params, speeds[i], opts);
    prev = og.report;
    if (progress) progress(og);
    lib.gaits.push_back(std::move(og.gait));
  }
  lib.validate();
  return lib;
}

std::array<std::vector<double>, 2> vertical_grf(const ModelParams& params, const GaitTrajectory& gait) {
  std::array<std::vector<double>, 2> out;
  for (int i = 0; i < gait.samples(); ++i) {
    const GroundReaction f = grf(params, gait.state_at(i));
    out[0].push_back(f.left.z);
    out[1].push_back(f.right.z);
  }
  return out;
}

GaitAudit audit_gait(const ModelParams& params, const GaitTrajectory& g) {
  GaitAudit a;
  const std::size_t n = g.phase.size();
  a.consistent_lengths = n >= 3 && g.body_pos.size() == n && g.body_vel.size() == n && g.label.size() == n &&
                         g.baseline.size() == n && g.foot_pos[0].size() == n && g.foot_pos[1].size() == n &&
                         g.foot_vel[0].size() == n && g.foot_vel[1].size() == n && g.setpoint[0].size() == n &&
                         g.setpoint[1].size() == n && g.setpoint_rate[0].size() == n &&
                         g.setpoint_rate[1].size() == n && g.input[0].size() == n && g.input[1].size() == n;
  if (!a.consistent_lengths) return a;

  const Vec3 shift{g.stride, 0, 0};
  double err = 0.0;
  const auto worse = [&](double e) { err = std::max(err, std::abs(e)); };
  const auto worse3 = [&](const Vec3& e) {
    worse(e.x);
    worse(e.y);
    worse(e.z);
  };
  const std::size_t last = n - 1;
  worse3(g.body_pos[last] - (g.body_pos[0] + shift));
  worse3(g.body_vel[last] - g.body_vel[0]);
  for (int s = 0; s < 2; ++s) {
    worse(g.setpoint[s][last] - g.setpoint[s][0]);
    worse(g.setpoint_rate[s][last] - g.setpoint_rate[s][0]);
    worse(g.input[s][last] - g.input[s][0]);
  }
  a.periodicity_error = err;

  err = 0.0;
  const std::size_t mid = last / 2;
  const Vec3 half_shift{0.5 * g.stride, 0, 0};
  worse3(g.body_pos[mid] - (mirrored(g.body_pos[0]) + half_shift));
  worse3(g.body_vel[mid] - mirrored(g.body_vel[0]));
  for (int s = 0; s < 2; ++s) {
    worse(g.setpoint[s][mid] - g.setpoint[1 - s][0]);
    worse(g.setpoint_rate[s][mid] - g.setpoint_rate[1 - s][0]);
  }
  a.half_cycle_error = err;

  a.mean_speed_error = std::abs((g.body_pos[last].x - g.body_pos[0].x) / g.period - g.speed);

  double low = std::numeric_limits<double>::infinity();
  const auto vz = vertical_grf(params, g);
  for (std::size_t i = 0; i < n; ++i)
    for (Side side : {Side::Left, Side::Right})
      if (in_stance(g.label[i], side)) low = std::min(low, vz[side_index(side)][i]);
  a.min_vertical_grf = low;
  return a;
}

ReferenceFrame sample(const GaitTrajectory& g, double phase) {
  if (!(phase >= 0.0 && phase < 1.0)) throw std::invalid_argument("phase must lie in [0, 1)");
  const int N = g.samples() - 1;
  const double pos = phase * N;
  const int i = std::min(static_cast<int>(pos), N - 1);
  const double w = pos - i;

  ReferenceFrame r;
  r.phase = phase;
  r.speed = g.speed;
  r.label = g.label[i];
  const auto at = [&](const auto& v) { return w == 0.0 ? v[i] : lerp(v[i], v[i + 1], w); };
  r.body_pos = at(g.body_pos);
  r.body_vel = at(g.body_vel);
  for (int s = 0; s < 2; ++s) {
    r.foot_pos[s] = at(g.foot_pos[s]);
    r.foot_vel[s] = at(g.foot_vel[s]);
    r.setpoint[s] = at(g.setpoint[s]);
    r.setpoint_rate[s] = at(g.setpoint_rate[s]);
    r.input[s] = at(g.input[s]);
    r.baseline[s] = w == 0.0 ? g.baseline[i][s] : lerp(g.baseline[i][s], g.baseline[i + 1][s], w);
  }
  return r;
}

SpeedBracket bracket(const GaitLibrary& lib, double commanded_speed) {
  if (lib.gaits.empty()) throw std::invalid_argument("cannot sample an empty library");
  if (!std::isfinite(commanded_speed)) throw std::invalid_argument("commanded speed must be finite");
  SpeedBracket b;
  const double lo = lib.gaits.front().speed, hi = lib.gaits.back().speed;
  b.speed = std::clamp(commanded_speed, lo, hi);
  b.clamped = b.speed != commanded_speed;
  std::size_t i = 0;
  while (i + 1 < lib.gaits.size() && lib.gaits[i + 1].speed <= b.speed) ++i;
  const double snap = 1e-9;
  if (std::abs(lib.gaits[i].speed - b.speed) <= snap || i + 1 == lib.gaits.size()) {
    b.lo = b.hi = i;
  } else if (std::abs(lib.gaits[i + 1].speed - b.speed) <= snap) {
    b.lo = b.hi = i + 1;
  } else {
    b.lo = i;
    b.hi = i + 1;
    b.w = (b.speed - lib.gaits[i].speed) / (lib.gaits[i + 1].speed - lib.gaits[i].speed);
  }
  return b;
}

ReferenceFrame sample(const GaitLibrary& lib, double commanded_speed, double phase) {
  const SpeedBracket b = bracket(lib, commanded_speed);
  ReferenceFrame r = b.lo == b.hi ? sample(lib.gaits[b.lo], phase)
                                  : blend(sample(lib.gaits[b.lo], phase), sample(lib.gaits[b.hi], phase), b.w);
  r.speed_clamped = b.clamped;
  return r;
}

double advance_clock(double phase, double dt, double period) {
  if (!(dt >= 0.0) || !(period > 0.0)) throw std::invalid_argument("advance_clock needs dt >= 0 and period > 0");
  double p = std::fmod(phase + dt / period, 1.0);
  if (p < 0.0) p += 1.0;
  if (p >= 1.0) p = 0.0;
  return p;
}

void save_library(const GaitLibrary& lib, const std::string& path, const std::string& config_fingerprint) {
  lib.validate();
  json doc;
  doc["format_version"] = lib.format_version;
  if (!config_fingerprint.empty()) doc["config_fingerprint"] = config_fingerprint;
  doc["model_params"] = params_json(lib.params);
  doc["speeds"] = lib.speeds();
  json gaits = json::array();
  for (const GaitTrajectory& g : lib.gaits) gaits.push_back(gait_json(g));
  doc["gaits"] = gaits;
  write_document(doc, path);
}

GaitLibrary load_library(const std::string& path, const ModelParams* expected) {
  const json doc = read_document(path);
  return guarded(path, [&] {
    check_version(doc);
    GaitLibrary lib;
    lib.params = params_from(doc.at("model_params"), expected);
    for (const json& g : doc.at("gaits")) lib.gaits.push_back(gait_from(g));
    if (doc.at("speeds").get<std::vector<double>>() != lib.speeds())
      throw LibraryFormatError("speed index does not match the stored gaits");
    lib.validate();
    return lib;
  });
}

void save_gait(const GaitTrajectory& gait, const ModelParams& params, const std::string& path,
               const std::string& config_fingerprint) {
  json doc;
  doc["format_version"] = kLibraryFormatVersion;
  if (!config_fingerprint.empty()) doc["config_fingerprint"] = config_fingerprint;
  doc["model_params"] = params_json(params);
  doc["gait"] = gait_json(gait);
  write_document(doc, path);
}

GaitTrajectory load_gait(const std::string& path, const ModelParams* expected) {
  const json doc = read_document(path);
  return guarded(path, [&] {
    check_version(doc);
    params_from(doc.at("model_params"), expected);
    return gait_from(doc.at("gait"));
  });
}

void write_gait_csv(const GaitTrajectory& g, std::ostream& out, const std::vector<std::string>& header) {
  for (const std::string& h : header) out << "# " << h << '\n';
  out << "phase,time,label,body_x,body_y,body_z,body_vx,body_vy,body_vz,"
         "left_foot_x,left_foot_y,left_foot_z,right_foot_x,right_foot_y,right_foot_z,"
         "left_foot_vx,left_foot_vy,left_foot_vz,right_foot_vx,right_foot_vy,right_foot_vz,"
         "left_d,right_d,left_d_dot,right_d_dot,left_u,right_u,"
         "left_roll,left_pitch,left_knee,right_roll,right_pitch,right_knee\n";
  char buf[64];
  const auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << ',' << buf;
  };
  const auto vec = [&](const Vec3& v) {
    num(v.x);
    num(v.y);
    num(v.z);
  };
  for (int i = 0; i < g.samples(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", g.phase[i]);
    out << buf;
    num(g.time_at(i));
    out << ',' << to_string(g.label[i]);
    vec(g.body_pos[i]);
    vec(g.body_vel[i]);
    vec(g.foot_pos[0][i]);
    vec(g.foot_pos[1][i]);
    vec(g.foot_vel[0][i]);
    vec(g.foot_vel[1][i]);
    num(g.setpoint[0][i]);
    num(g.setpoint[1][i]);
    num(g.setpoint_rate[0][i]);
    num(g.setpoint_rate[1][i]);
    num(g.input[0][i]);
    num(g.input[1][i]);
    for (const JointAngles& q : g.baseline[i]) {
      num(q.roll);
      num(q.pitch);
      num(q.knee);
    }
    out << '\n';
  }
}

}  // namespace aslip
