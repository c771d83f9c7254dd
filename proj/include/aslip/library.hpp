#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "aslip/legkin.hpp"
#include "aslip/model.hpp"
#include "aslip/solver.hpp"
#include "aslip/transcription.hpp"

namespace aslip {

inline constexpr int kLibraryFormatVersion = 1;

struct Footstep {
  Side side = Side::Left;
  double time = 0.0;  // touchdown time within the cycle, s
  Vec3 position;
};

/// One optimized walking cycle resampled onto a uniform phase grid.
///
/// Sample i sits at phase i / (samples() - 1); the last sample closes the
/// cycle and equals the first shifted forward by one stride. Per-leg arrays are
/// indexed by Side.
struct GaitTrajectory {
  double speed = 0.0;
  double period = 0.0;
  double stride = 0.0;
  double single_duration = 0.0;
  double double_duration = 0.0;

  std::vector<double> phase;
  std::vector<Vec3> body_pos, body_vel;
  std::array<std::vector<Vec3>, 2> foot_pos, foot_vel;
  std::vector<Phase> label;
  std::array<std::vector<double>, 2> setpoint, setpoint_rate, input;
  std::vector<std::array<JointAngles, 2>> baseline;

  std::vector<Footstep> footsteps;
  Vec3 initial_foot[2];  // both feet at phase 0 (left planted, right lifting off)

  // Full-cycle collocation knots, kept for open-loop replay.
  std::vector<double> knot_time;
  std::vector<KnotState> knot_state;
  std::vector<KnotInput> knot_input;

  int samples() const { return static_cast<int>(phase.size()); }
  double time_at(int i) const { return phase[i] * period; }
  /// Plant state reconstructed at sample i.
  AslipState state_at(int i) const;
};

struct GaitLibrary {
  int format_version = kLibraryFormatVersion;
  ModelParams params;
  std::vector<GaitTrajectory> gaits;

  std::vector<double> speeds() const;
  /// Throws std::invalid_argument unless speeds strictly increase and all
  /// gaits share one sample grid.
  void validate() const;
  /// Speeds whose stride is shorter than the previous entry's. Expected to be
  /// empty; callers treat a non-empty result as a warning.
  std::vector<double> stride_decreases() const;
};

/// Desired motion at one instant, as consumed by the controller.
struct ReferenceFrame {
  double phase = 0.0;
  double speed = 0.0;
  bool speed_clamped = false;
  Phase label = Phase::SingleStanceLeft;
  Vec3 body_pos, body_vel;
  std::array<Vec3, 2> foot_pos, foot_vel;
  std::array<double, 2> setpoint{}, setpoint_rate{}, input{};
  std::array<JointAngles, 2> baseline{};
};

struct GaitOptions {
  TranscriptionOptions bounds;
  int knots_single = 10;
  int knots_double = 6;
  DurationBounds single_duration;
  DurationBounds double_duration;
  double swing_clearance = 0.2;
  int samples_per_cycle = 200;
  LegGeometry left_leg = LegGeometry::left();
  LegGeometry right_leg = LegGeometry::right();
  nlp::SolverOptions solver = default_solver();

  /// Gait solves run two orders tighter than the generic default so that
  /// resampled cycles close to well under a micrometre.
  static nlp::SolverOptions default_solver() {
    nlp::SolverOptions s;
    s.feasibility_tol = 1e-8;
    return s;
  }

  ContactSchedule schedule() const {
    return ContactSchedule::walking(knots_single, knots_double, single_duration, double_duration);
  }
};

class GaitSolveError : public std::runtime_error {
 public:
  GaitSolveError(double speed, nlp::SolveStatus status, double violation);
  double speed() const { return speed_; }
  nlp::SolveStatus status() const { return status_; }

 private:
  double speed_;
  nlp::SolveStatus status_;
};

struct OptimizedGait {
  GaitTrajectory gait;
  nlp::SolveReport report;  // report.x is the half-cycle decision vector
};

/// Dense resampling of an NLP solution over the full cycle, with minimum-jerk
/// swing feet and baseline joint angles.
GaitTrajectory resample(const GaitNlp& nlp, const Eigen::VectorXd& z, const GaitOptions& opts);

/// Solves one speed. A cold start that fails is retried by continuation from
/// standing in 0.1 m/s increments. Throws GaitSolveError if neither converges.
OptimizedGait optimize_gait(const ModelParams& params, double speed, const GaitOptions& opts);

/// Re-solves `coarse` (optimized under `coarse_opts`) on the knot grid of
/// `fine_opts`, starting from the interpolated coarse solution.
OptimizedGait refine_gait(const ModelParams& params, const OptimizedGait& coarse, const GaitOptions& coarse_opts,
                          const GaitOptions& fine_opts);

/// Warm-started sweep over sorted speeds; any failure aborts the build.
GaitLibrary build_library(const ModelParams& params, const std::vector<double>& speeds, const GaitOptions& opts,
                          const std::function<void(const OptimizedGait&)>& progress = {});

struct GaitAudit {
  double periodicity_error = 0.0;  // last sample vs first shifted by one stride
  double half_cycle_error = 0.0;   // mid sample vs leg-swapped first shifted by one step
  double mean_speed_error = 0.0;
  double min_vertical_grf = 0.0;
  bool consistent_lengths = false;
};

GaitAudit audit_gait(const ModelParams& params, const GaitTrajectory& gait);

/// Vertical ground reaction of each stance foot at every sample.
std::array<std::vector<double>, 2> vertical_grf(const ModelParams& params, const GaitTrajectory& gait);

/// Bracketing entries for a commanded speed: blend lib.gaits[lo] and
/// lib.gaits[hi] with weight w on hi. lo == hi on grid speeds and at the ends.
struct SpeedBracket {
  std::size_t lo = 0, hi = 0;
  double w = 0.0;
  double speed = 0.0;  // after clamping
  bool clamped = false;
};
SpeedBracket bracket(const GaitLibrary& lib, double commanded_speed);

ReferenceFrame sample(const GaitTrajectory& gait, double phase);
ReferenceFrame sample(const GaitLibrary& lib, double commanded_speed, double phase);

/// (phase + dt / period) mod 1.
double advance_clock(double phase, double dt, double period);

class LibraryFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// `config_fingerprint`, when given, is stored alongside the format version.
void save_library(const GaitLibrary& lib, const std::string& path, const std::string& config_fingerprint = {});
/// Rejects unknown versions, corrupted fingerprints and, when `expected` is
/// given, libraries built for different model parameters.
GaitLibrary load_library(const std::string& path, const ModelParams* expected = nullptr);

/// Single-gait document with the same header fields as a library.
void save_gait(const GaitTrajectory& gait, const ModelParams& params, const std::string& path,
               const std::string& config_fingerprint = {});
GaitTrajectory load_gait(const std::string& path, const ModelParams* expected = nullptr);

/// One row per sample; `header` lines are written first as '#' comments.
void write_gait_csv(const GaitTrajectory& gait, std::ostream& out, const std::vector<std::string>& header = {});

}  // namespace aslip
