#pragma once

#include <array>
#include <deque>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "aslip/library.hpp"
#include "aslip/reward.hpp"

namespace aslip {

class SimulationFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One classical RK4 step. Contacts and footholds are frozen over the step and
/// the input moves linearly from u0 to u1. Throws SimulationFault on a
/// non-finite result or an invalid state.
AslipState integrate(const ModelParams& params, const AslipState& state, const LegInput& u0, const LegInput& u1,
                     double dt);
inline AslipState integrate(const ModelParams& params, const AslipState& state, const LegInput& u, double dt) {
  return integrate(params, state, u, u, dt);
}

// ---- open-loop replay --------------------------------------------------------

struct ReplayOptions {
  double max_step = 0.0005;  // s
  double grf_tolerance = 1e-6;  // N
};

/// Plant trajectory of one replayed cycle, one row per gait sample.
struct ReplayLog {
  std::vector<double> time;
  std::vector<AslipState> state;
  std::vector<GroundReaction> grf;
  double max_body_deviation = 0.0;  // against the resampled gait
  double max_knot_deviation = 0.0;  // against the collocation knots
  double min_vertical_grf = 0.0;    // over stance legs
  double mean_forward_velocity = 0.0;
  bool contact_fault = false;
};

/// Integrates the stored knot inputs (linear between knots) with the gait's
/// footholds switched in at the scheduled times.
ReplayLog rollout_open_loop(const ModelParams& params, const GaitTrajectory& gait, const ReplayOptions& opts = {});

/// Shape of one leg's vertical ground reaction over a stance phase: the two
/// highest local maxima and the lowest point between them.
struct GrfHumps {
  bool found = false;  // at least two local maxima
  double first_peak = 0.0, second_peak = 0.0, valley = 0.0;
  double first_time = 0.0, second_time = 0.0, valley_time = 0.0;
  /// 1 - valley / min(peaks); 0 when not found.
  double dip() const;
};

/// Analyses the right leg's stance, which is contiguous within one replayed
/// cycle.
GrfHumps stance_grf_humps(const ReplayLog& log);

void write_replay_csv(const ReplayLog& log, std::ostream& out, const std::vector<std::string>& header = {});

// ---- reinforcement-learning environment ------------------------------------

struct SimConfig {
  int substeps = 60;  // per control period: 60 x 1/1980 s
  double control_period = 1.0 / 33.0;
  int delay_substeps = 6;
  int max_steps = kMaxEpisodeSteps;

  double rate_delta_max = 1.0;        // m/s
  double foothold_offset_max = 0.15;  // m
  double servo_kp = 400.0;            // 1/s^2
  double servo_kd = 40.0;             // 1/s
  double input_max = 100.0;           // m/s^2
  double observation_noise = 0.0;     // std of additive Gaussian noise
  double grf_tolerance = 1e-6;        // N

  RewardWeights weights;
  RewardScales scales;

  double substep() const { return control_period / substeps; }
  void validate() const;
};

/// Action layout: setpoint-rate deltas [left, right], then touchdown foothold
/// offsets [left x, left y, right x, right y]. Entries are normalized: each is
/// clipped to [-1, 1] and scaled by rate_delta_max (m/s) or
/// foothold_offset_max (m).
inline constexpr int kActionDim = 6;
/// Observation layout (see WalkEnv::observe).
inline constexpr int kObservationDim = 38;

using Action = std::vector<double>;
using Observation = std::vector<double>;

struct Touchdown {
  Side side = Side::Left;
  double time = 0.0;
  Vec3 foothold;
  Vec3 reference;  // where the reference places the foot relative to the body
  double error = 0.0;  // horizontal distance between the two
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  RewardBreakdown terms;
  GroundReaction grf;
  bool fault = false;
  std::string fault_reason;
  std::vector<Touchdown> touchdowns;
};

/// Reduced-order walking environment at the control rate.
///
/// The reference is the library sampled at the commanded speed and the phase
/// clock; contacts switch when the clock crosses the scheduled fractions of
/// the cycle. Everything the reward and the swing feet use is measured
/// relative to the body, so the reference never needs a world-frame anchor.
class WalkEnv {
 public:
  WalkEnv(std::shared_ptr<const GaitLibrary> lib, SimConfig cfg = {});

  /// Uniform random phase; the plant starts on the reference.
  Observation reset(double commanded_speed, std::mt19937_64& rng);
  Observation reset_at(double commanded_speed, double phase, std::uint64_t noise_seed = 0);

  /// Throws std::logic_error when the episode is over.
  StepResult step(const Action& action);

  /// Changes the commanded speed without touching the plant or the clock.
  void set_command(double commanded_speed);

  /// Reward terms of the current state against the current reference.
  RewardBreakdown evaluate_reward(const Action& action) const;

  const AslipState& state() const { return state_; }
  double phase() const { return phase_; }
  double time() const { return steps_ * cfg_.control_period; }
  int steps() const { return steps_; }
  bool done() const { return done_; }
  double commanded_speed() const { return speed_; }
  double period() const { return period_; }
  const SimConfig& config() const { return cfg_; }
  const GaitLibrary& library() const { return *lib_; }
  std::array<Vec3, 2> feet() const;
  ReferenceFrame reference() const;

  /// When set, receives the plant state after every substep.
  void trace_substeps(std::vector<AslipState>* out) { trace_ = out; }

 private:
  struct Swing {
    Vec3 correction0;  // horizontal foot offset from the reference at liftoff
  };
  struct Pending {
    long long active_from;  // substep index
    Action action;
  };

  Phase scheduled_phase(double phase) const;
  double swing_progress(Side side, double phase) const;
  Vec3 swing_foot(Side side, const ReferenceFrame& ref, const Action& applied) const;
  void switch_contacts(Phase next, const ReferenceFrame& ref, StepResult* out);
  Observation observe();
  Action clamp_action(const Action& a) const;
  Action physical(const Action& normalized) const;

  std::shared_ptr<const GaitLibrary> lib_;
  SimConfig cfg_;
  double speed_ = 0.0;
  double period_ = 1.0;
  double single_fraction_ = 0.4;

  AslipState state_;
  double phase_ = 0.0;
  int steps_ = 0;
  long long substep_index_ = 0;
  bool done_ = true;
  std::array<Swing, 2> swing_{};
  Action applied_;
  std::optional<Action> previous_;
  std::deque<Pending> pending_;
  std::mt19937_64 noise_rng_;
  std::vector<AslipState>* trace_ = nullptr;
};

/// One control step of an episode, for CSV logs.
struct StepRecord {
  double time = 0.0;
  double phase = 0.0;
  Phase label = Phase::DoubleStance;
  Vec3 body_pos, body_vel;
  std::array<Vec3, 2> feet;
  GroundReaction grf;
  RewardBreakdown terms;
  Action action;
};

StepRecord record(const WalkEnv& env, const StepResult& result, const Action& action);
void write_step_csv(const std::vector<StepRecord>& rows, std::ostream& out,
                    const std::vector<std::string>& header = {});

}  // namespace aslip
