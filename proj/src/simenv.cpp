#include "aslip/simenv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace aslip {

namespace {

AslipState advanced(const AslipState& s, const StateDerivative& k, double h) {
  AslipState o = s;
  o.r = s.r + k.r_dot * h;
  o.v = s.v + k.v_dot * h;
  o.left.d += k.left_d_dot * h;
  o.left.d_dot += k.left_d_ddot * h;
  o.right.d += k.right_d_dot * h;
  o.right.d_dot += k.right_d_ddot * h;
  return o;
}

bool finite(const AslipState& s) {
  return std::isfinite(s.r.x) && std::isfinite(s.r.y) && std::isfinite(s.r.z) && std::isfinite(s.v.x) &&
         std::isfinite(s.v.y) && std::isfinite(s.v.z) && std::isfinite(s.left.d) && std::isfinite(s.left.d_dot) &&
         std::isfinite(s.right.d) && std::isfinite(s.right.d_dot);
}

double min_stance_grf(const ModelParams& params, const AslipState& s) {
  const GroundReaction f = grf(params, s);
  double low = std::numeric_limits<double>::infinity();
  if (s.left.in_contact) low = std::min(low, f.left.z);
  if (s.right.in_contact) low = std::min(low, f.right.z);
  return low;
}

int side_index(Side s) { return s == Side::Left ? 0 : 1; }

double min_jerk_blend(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
}

Vec3 horizontal(const Vec3& v) { return {v.x, v.y, 0.0}; }

void write_num(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, ",%.17g", v);
  out << buf;
}

void write_vec(std::ostream& out, const Vec3& v) {
  write_num(out, v.x);
  write_num(out, v.y);
  write_num(out, v.z);
}

}  // namespace

AslipState integrate(const ModelParams& params, const AslipState& s, const LegInput& u0, const LegInput& u1,
                     double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("integration step must be positive");
  const LegInput um{0.5 * (u0.left + u1.left), 0.5 * (u0.right + u1.right)};
  AslipState out;
  try {
    const StateDerivative k1 = dynamics(params, s, u0);
    const StateDerivative k2 = dynamics(params, advanced(s, k1, 0.5 * dt), um);
    const StateDerivative k3 = dynamics(params, advanced(s, k2, 0.5 * dt), um);
    const StateDerivative k4 = dynamics(params, advanced(s, k3, dt), u1);
    StateDerivative k;
    k.r_dot = (k1.r_dot + 2.0 * k2.r_dot + 2.0 * k3.r_dot + k4.r_dot) / 6.0;
    k.v_dot = (k1.v_dot + 2.0 * k2.v_dot + 2.0 * k3.v_dot + k4.v_dot) / 6.0;
    k.left_d_dot = (k1.left_d_dot + 2.0 * k2.left_d_dot + 2.0 * k3.left_d_dot + k4.left_d_dot) / 6.0;
    k.left_d_ddot = (k1.left_d_ddot + 2.0 * k2.left_d_ddot + 2.0 * k3.left_d_ddot + k4.left_d_ddot) / 6.0;
    k.right_d_dot = (k1.right_d_dot + 2.0 * k2.right_d_dot + 2.0 * k3.right_d_dot + k4.right_d_dot) / 6.0;
    k.right_d_ddot = (k1.right_d_ddot + 2.0 * k2.right_d_ddot + 2.0 * k3.right_d_ddot + k4.right_d_ddot) / 6.0;
    out = advanced(s, k, dt);
  } catch (const InvalidState& e) {
    throw SimulationFault(e.what());
  }
  if (!finite(out)) throw SimulationFault("non-finite plant state");
  return out;
}

// ---- replay ------------------------------------------------------------------

ReplayLog rollout_open_loop(const ModelParams& params, const GaitTrajectory& g, const ReplayOptions& opts) {
  const int n_knots = static_cast<int>(g.knot_time.size());
  if (n_knots < 2 || g.samples() < 2) throw std::invalid_argument("gait has no knots to replay");
  if (!(opts.max_step > 0.0)) throw std::invalid_argument("replay step must be positive");
  const double T = g.period, ts = g.single_duration, half = 0.5 * T;
  const auto scheduled = [&](double t) {
    if (t < ts) return Phase::SingleStanceLeft;
    if (t < half) return Phase::DoubleStance;
    if (t < half + ts) return Phase::SingleStanceRight;
    return Phase::DoubleStance;
  };

  // integration breakpoints: every knot and every sample time
  struct Mark {
    double t;
    int sample, knot;
  };
  std::vector<Mark> marks;
  for (int i = 0; i < g.samples(); ++i) marks.push_back({g.time_at(i), i, -1});
  for (int k = 0; k < n_knots; ++k) marks.push_back({g.knot_time[k], -1, k});
  std::sort(marks.begin(), marks.end(), [](const Mark& a, const Mark& b) { return a.t < b.t; });
  std::vector<Mark> merged;
  for (const Mark& m : marks) {
    if (!merged.empty() && m.t - merged.back().t < 1e-12) {
      if (m.sample >= 0) merged.back().sample = m.sample;
      if (m.knot >= 0) merged.back().knot = m.knot;
    } else {
      merged.push_back(m);
    }
  }

  const KnotState& x0 = g.knot_state.front();
  AslipState s;
  s.r = {x0(0), x0(1), x0(2)};
  s.v = {x0(3), x0(4), x0(5)};
  s.left = {g.initial_foot[0], x0(6), x0(7), true};
  s.right = {g.initial_foot[1], x0(8), x0(9), false};
  s.phase = Phase::SingleStanceLeft;

  ReplayLog log;
  log.min_vertical_grf = std::numeric_limits<double>::infinity();
  const auto note = [&](const Mark& m) {
    if (m.sample >= 0) {
      log.time.push_back(m.t);
      log.state.push_back(s);
      log.grf.push_back(grf(params, s));
      log.max_body_deviation = std::max(log.max_body_deviation, norm(s.r - g.body_pos[m.sample]));
    }
    if (m.knot >= 0) {
      const KnotState& x = g.knot_state[m.knot];
      log.max_knot_deviation = std::max(log.max_knot_deviation, norm(s.r - Vec3{x(0), x(1), x(2)}));
    }
  };
  note(merged.front());

  int k = 0;
  for (std::size_t e = 0; e + 1 < merged.size(); ++e) {
    const double a = merged[e].t, b = merged[e + 1].t;
    const double mid = 0.5 * (a + b);
    const Phase next = scheduled(mid);
    if (next != s.phase) {
      if (!in_stance(s.phase, Side::Right) && in_stance(next, Side::Right)) s.right.foothold = g.footsteps.at(0).position;
      if (!in_stance(s.phase, Side::Left) && in_stance(next, Side::Left)) s.left.foothold = g.footsteps.at(1).position;
      s.left.in_contact = in_stance(next, Side::Left);
      s.right.in_contact = in_stance(next, Side::Right);
      s.phase = next;
    }
    while (k + 2 < n_knots && g.knot_time[k + 1] <= mid) ++k;
    const double t0 = g.knot_time[k], t1 = g.knot_time[k + 1];
    const auto input = [&](double t) {
      const double w = (t - t0) / (t1 - t0);
      const KnotInput u = g.knot_input[k] + (g.knot_input[k + 1] - g.knot_input[k]) * w;
      return LegInput{u(0), u(1)};
    };
    const int n = std::max(1, static_cast<int>(std::ceil((b - a) / opts.max_step - 1e-9)));
    const double h = (b - a) / n;
    for (int j = 0; j < n; ++j) {
      const double t = a + j * h;
      s = integrate(params, s, input(t), input(j + 1 == n ? b : t + h), h);
      log.min_vertical_grf = std::min(log.min_vertical_grf, min_stance_grf(params, s));
    }
    note(merged[e + 1]);
  }
  log.mean_forward_velocity = (log.state.back().r.x - log.state.front().r.x) / T;
  log.contact_fault = log.min_vertical_grf < -opts.grf_tolerance;
  return log;
}

double GrfHumps::dip() const { return found ? 1.0 - valley / std::min(first_peak, second_peak) : 0.0; }

GrfHumps stance_grf_humps(const ReplayLog& log) {
  std::vector<double> f, t;
  for (std::size_t i = 0; i < log.state.size(); ++i) {
    if (!log.state[i].right.in_contact) continue;
    f.push_back(log.grf[i].right.z);
    t.push_back(log.time[i]);
  }
  // strict local maxima, with a flat top counted once
  std::vector<int> peaks;
  for (int i = 1; i + 1 < static_cast<int>(f.size()); ++i) {
    if (!(f[i] > f[i - 1])) continue;
    int j = i;
    while (j + 1 < static_cast<int>(f.size()) && f[j + 1] == f[i]) ++j;
    if (j + 1 < static_cast<int>(f.size()) && f[j + 1] < f[i]) peaks.push_back(i);
    i = j;
  }
  GrfHumps h;
  if (peaks.size() < 2) return h;
  std::sort(peaks.begin(), peaks.end(), [&](int a, int b) { return f[a] > f[b]; });
  const int a = std::min(peaks[0], peaks[1]), b = std::max(peaks[0], peaks[1]);
  const int v = static_cast<int>(std::min_element(f.begin() + a, f.begin() + b + 1) - f.begin());
  h.found = true;
  h.first_peak = f[a];
  h.second_peak = f[b];
  h.valley = f[v];
  h.first_time = t[a];
  h.second_time = t[b];
  h.valley_time = t[v];
  return h;
}

void write_replay_csv(const ReplayLog& log, std::ostream& out, const std::vector<std::string>& header) {
  for (const std::string& h : header) out << "# " << h << '\n';
  out << "time,label,body_x,body_y,body_z,body_vx,body_vy,body_vz,left_grf_x,left_grf_y,left_grf_z,"
         "right_grf_x,right_grf_y,right_grf_z,left_d,right_d\n";
  char buf[32];
  for (std::size_t i = 0; i < log.time.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", log.time[i]);
    out << buf << ',' << to_string(log.state[i].phase);
    write_vec(out, log.state[i].r);
    write_vec(out, log.state[i].v);
    write_vec(out, log.grf[i].left);
    write_vec(out, log.grf[i].right);
    write_num(out, log.state[i].left.d);
    write_num(out, log.state[i].right.d);
    out << '\n';
  }
}

// ---- environment -------------------------------------------------------------

void SimConfig::validate() const {
  if (substeps < 1) throw std::invalid_argument("substeps must be at least 1");
  if (!(control_period > 0.0)) throw std::invalid_argument("control period must be positive");
  if (delay_substeps < 0) throw std::invalid_argument("action delay must be nonnegative");
  if (max_steps < 1) throw std::invalid_argument("episode cap must be at least 1");
  for (double v : {rate_delta_max, foothold_offset_max, servo_kp, servo_kd, input_max, observation_noise, grf_tolerance})
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("simulation limits and gains must be finite and >= 0");
  weights.validate();
}

WalkEnv::WalkEnv(std::shared_ptr<const GaitLibrary> lib, SimConfig cfg) : lib_(std::move(lib)), cfg_(cfg) {
  if (!lib_ || lib_->gaits.empty()) throw std::invalid_argument("environment needs a non-empty gait library");
  cfg_.validate();
  applied_.assign(kActionDim, 0.0);
  set_command(lib_->gaits.front().speed);
}

void WalkEnv::set_command(double commanded_speed) {
  const SpeedBracket b = bracket(*lib_, commanded_speed);
  const GaitTrajectory &lo = lib_->gaits[b.lo], &hi = lib_->gaits[b.hi];
  speed_ = b.speed;
  period_ = lo.period + (hi.period - lo.period) * b.w;
  const double single = lo.single_duration + (hi.single_duration - lo.single_duration) * b.w;
  single_fraction_ = single / period_;
}

Phase WalkEnv::scheduled_phase(double phase) const {
  if (phase < single_fraction_) return Phase::SingleStanceLeft;
  if (phase < 0.5) return Phase::DoubleStance;
  if (phase < 0.5 + single_fraction_) return Phase::SingleStanceRight;
  return Phase::DoubleStance;
}

double WalkEnv::swing_progress(Side side, double phase) const {
  const double start = side == Side::Right ? 0.0 : 0.5;
  return (phase - start) / single_fraction_;
}

ReferenceFrame WalkEnv::reference() const { return sample(*lib_, speed_, phase_); }

Vec3 WalkEnv::swing_foot(Side side, const ReferenceFrame& ref, const Action& applied) const {
  const int s = side_index(side);
  const double w = min_jerk_blend(swing_progress(side, ref.phase));
  const Vec3 offset{applied[2 + 2 * s], applied[3 + 2 * s], 0.0};
  const Vec3 correction = swing_[s].correction0 * (1.0 - w) + offset * w;
  Vec3 foot = state_.r + (ref.foot_pos[s] - ref.body_pos) + correction;
  foot.z = ref.foot_pos[s].z;
  return foot;
}

std::array<Vec3, 2> WalkEnv::feet() const {
  const ReferenceFrame ref = reference();
  std::array<Vec3, 2> out;
  for (Side side : {Side::Left, Side::Right}) {
    const LegState& leg = state_.leg(side);
    out[side_index(side)] = leg.in_contact ? leg.foothold : swing_foot(side, ref, applied_);
  }
  return out;
}

void WalkEnv::switch_contacts(Phase next, const ReferenceFrame& ref, StepResult* out) {
  for (Side side : {Side::Left, Side::Right}) {
    const int s = side_index(side);
    const bool was = in_stance(state_.phase, side), will = in_stance(next, side);
    LegState& leg = state_.leg(side);
    if (was && !will) {
      swing_[s].correction0 = horizontal(leg.foothold - state_.r - (ref.foot_pos[s] - ref.body_pos));
      leg.in_contact = false;
    } else if (!was && will) {
      Vec3 target = swing_foot(side, ref, applied_);
      target.z = 0.0;
      Vec3 nominal = state_.r + (ref.foot_pos[s] - ref.body_pos);
      nominal.z = 0.0;
      leg.foothold = target;
      leg.in_contact = true;
      if (out) out->touchdowns.push_back({side, time(), target, nominal, norm(target - nominal)});
    }
  }
  state_.phase = next;
}

Action WalkEnv::clamp_action(const Action& a) const {
  if (a.size() != static_cast<std::size_t>(kActionDim))
    throw std::invalid_argument("action must have " + std::to_string(kActionDim) + " entries, got " +
                                std::to_string(a.size()));
  Action out(a);
  for (double& v : out) {
    if (!std::isfinite(v)) throw std::invalid_argument("action entries must be finite");
    v = std::clamp(v, -1.0, 1.0);
  }
  return out;
}

Action WalkEnv::physical(const Action& normalized) const {
  Action out(normalized);
  for (int i = 0; i < kActionDim; ++i) out[i] *= i < 2 ? cfg_.rate_delta_max : cfg_.foothold_offset_max;
  return out;
}

Observation WalkEnv::reset(double commanded_speed, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double phase = U(rng);
  return reset_at(commanded_speed, phase, rng());
}

Observation WalkEnv::reset_at(double commanded_speed, double phase, std::uint64_t noise_seed) {
  if (!(phase >= 0.0 && phase < 1.0)) throw std::invalid_argument("reset phase must lie in [0, 1)");
  set_command(commanded_speed);
  phase_ = phase;
  steps_ = 0;
  substep_index_ = 0;
  done_ = false;
  previous_.reset();
  applied_.assign(kActionDim, 0.0);
  pending_.clear();
  noise_rng_.seed(noise_seed);
  swing_ = {};

  const ReferenceFrame ref = reference();
  state_ = {};
  state_.r = ref.body_pos;
  state_.v = ref.body_vel;
  state_.phase = scheduled_phase(phase);
  for (Side side : {Side::Left, Side::Right}) {
    const int s = side_index(side);
    LegState& leg = state_.leg(side);
    leg.d = ref.setpoint[s];
    leg.d_dot = ref.setpoint_rate[s];
    leg.in_contact = in_stance(state_.phase, side);
    leg.foothold = ref.foot_pos[s];
    if (leg.in_contact) leg.foothold.z = 0.0;
  }
  return observe();
}

RewardBreakdown WalkEnv::evaluate_reward(const Action& action) const {
  const ReferenceFrame ref = reference();
  const std::array<Vec3, 2> f = feet();
  const RewardScales& sc = cfg_.scales;
  RewardBreakdown t;
  t.com_vel = com_vel_term(state_.v, ref.body_vel, 0.0, sc.com_vel);
  t.foot_pos = foot_pos_term({f[0] - state_.r, f[1] - state_.r},
                             {ref.foot_pos[0] - ref.body_pos, ref.foot_pos[1] - ref.body_pos}, sc.foot_pos);
  t.straight = straight_term(state_.r.y, sc.straight);
  t.foot_orient = foot_orient_term_point_feet();
  t.action_diff = action_diff_term(action, previous_, sc.action_diff);
  return total_reward(t, cfg_.weights);
}

StepResult WalkEnv::step(const Action& action) {
  if (done_) throw std::logic_error("step called on a finished episode; call reset first");
  const Action a = clamp_action(action);
  pending_.push_back({substep_index_ + cfg_.delay_substeps, physical(a)});

  StepResult out;
  const double h = cfg_.substep();
  const double phase0 = phase_;
  for (int j = 0; j < cfg_.substeps && !out.fault; ++j) {
    while (!pending_.empty() && pending_.front().active_from <= substep_index_) {
      applied_ = pending_.front().action;
      pending_.pop_front();
    }
    phase_ = advance_clock(phase0, j * h, period_);
    const ReferenceFrame ref = reference();
    const Phase next = scheduled_phase(phase_);
    if (next != state_.phase) switch_contacts(next, ref, &out);

    LegInput u;
    for (Side side : {Side::Left, Side::Right}) {
      const int s = side_index(side);
      const LegState& leg = state_.leg(side);
      const double cmd = ref.input[s] + cfg_.servo_kp * (ref.setpoint[s] - leg.d) +
                         cfg_.servo_kd * (ref.setpoint_rate[s] + applied_[s] - leg.d_dot);
      (side == Side::Left ? u.left : u.right) = std::clamp(cmd, -cfg_.input_max, cfg_.input_max);
    }
    try {
      state_ = integrate(lib_->params, state_, u, h);
      if (min_stance_grf(lib_->params, state_) < -cfg_.grf_tolerance) {
        out.fault = true;
        out.fault_reason = "stance leg pulls on the ground";
      }
    } catch (const SimulationFault& e) {
      out.fault = true;
      out.fault_reason = e.what();
    }
    ++substep_index_;
    if (trace_) trace_->push_back(state_);
  }
  phase_ = advance_clock(phase0, cfg_.control_period, period_);
  ++steps_;

  out.terms = evaluate_reward(a);
  previous_ = a;
  out.reward = out.terms.total;
  out.grf = grf(lib_->params, state_);
  out.done = out.fault || should_terminate(steps_, out.reward, cfg_.max_steps);
  done_ = out.done;
  out.observation = observe();
  return out;
}

// Layout: [0] body height, [1] heading (always 0 for the point mass), [2]
// lateral position, [3..5] velocity, [6..9] left d, d_dot, right d, d_dot,
// [10..11] stance flags, [12..17] feet relative to the body, [18..19]
// reference body minus body in y and z, [20..22] reference velocity, [23..28]
// reference feet relative to the reference body, [29..34] reference foot
// velocities, [35..36] sin and cos of the clock angle, [37] commanded speed.
Observation WalkEnv::observe() {
  const ReferenceFrame ref = reference();
  const std::array<Vec3, 2> f = feet();
  Observation o;
  o.reserve(kObservationDim);
  const auto push = [&](const Vec3& v) {
    o.push_back(v.x);
    o.push_back(v.y);
    o.push_back(v.z);
  };
  o.push_back(state_.r.z);
  o.push_back(0.0);
  o.push_back(state_.r.y);
  push(state_.v);
  o.push_back(state_.left.d);
  o.push_back(state_.left.d_dot);
  o.push_back(state_.right.d);
  o.push_back(state_.right.d_dot);
  o.push_back(state_.left.in_contact ? 1.0 : 0.0);
  o.push_back(state_.right.in_contact ? 1.0 : 0.0);
  push(f[0] - state_.r);
  push(f[1] - state_.r);
  o.push_back(ref.body_pos.y - state_.r.y);
  o.push_back(ref.body_pos.z - state_.r.z);
  push(ref.body_vel);
  push(ref.foot_pos[0] - ref.body_pos);
  push(ref.foot_pos[1] - ref.body_pos);
  push(ref.foot_vel[0]);
  push(ref.foot_vel[1]);
  o.push_back(std::sin(2.0 * M_PI * phase_));
  o.push_back(std::cos(2.0 * M_PI * phase_));
  o.push_back(speed_);
  if (cfg_.observation_noise > 0.0) {
    std::normal_distribution<double> N(0.0, cfg_.observation_noise);
    for (double& v : o) v += N(noise_rng_);
  }
  return o;
}

StepRecord record(const WalkEnv& env, const StepResult& result, const Action& action) {
  StepRecord r;
  r.time = env.time();
  r.phase = env.phase();
  r.label = env.state().phase;
  r.body_pos = env.state().r;
  r.body_vel = env.state().v;
  r.feet = env.feet();
  r.grf = result.grf;
  r.terms = result.terms;
  r.action = action;
  return r;
}

void write_step_csv(const std::vector<StepRecord>& rows, std::ostream& out, const std::vector<std::string>& header) {
  for (const std::string& h : header) out << "# " << h << '\n';
  out << "time,phase,label,body_x,body_y,body_z,body_vx,body_vy,body_vz,"
         "left_foot_x,left_foot_y,left_foot_z,right_foot_x,right_foot_y,right_foot_z,"
         "left_grf_x,left_grf_y,left_grf_z,right_grf_x,right_grf_y,right_grf_z,"
         "r_com_vel,r_foot_pos,r_straight,r_foot_orient,r_action_diff,reward";
  for (int i = 0; i < kActionDim; ++i) out << ",action_" << i;
  out << '\n';
  char buf[32];
  for (const StepRecord& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.time);
    out << buf;
    write_num(out, r.phase);
    out << ',' << to_string(r.label);
    write_vec(out, r.body_pos);
    write_vec(out, r.body_vel);
    write_vec(out, r.feet[0]);
    write_vec(out, r.feet[1]);
    write_vec(out, r.grf.left);
    write_vec(out, r.grf.right);
    for (double v : {r.terms.com_vel, r.terms.foot_pos, r.terms.straight, r.terms.foot_orient, r.terms.action_diff,
                     r.terms.total})
      write_num(out, v);
    for (double v : r.action) write_num(out, v);
    out << '\n';
  }
}

}  // namespace aslip
