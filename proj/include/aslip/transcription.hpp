#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aslip/model.hpp"
#include "aslip/solver.hpp"

namespace aslip {

/// Per-knot state ordering: body position (3), body velocity (3), then
/// (d, d_dot) for the left and right actuators.
inline constexpr int kStateDim = 10;
inline constexpr int kInputDim = 2;

using KnotState = Eigen::Matrix<double, kStateDim, 1>;
using KnotInput = Eigen::Matrix<double, kInputDim, 1>;

struct DurationBounds {
  double min = 0.05;
  double max = 0.6;
};

struct SchedulePhase {
  Phase phase = Phase::DoubleStance;
  int knots = 2;
  DurationBounds duration;
};

/// Walking contact sequence over one full cycle: single-left, double,
/// single-right, double. The transcription optimizes the first half and
/// closes it with the mirror/leg-swap periodicity condition.
struct ContactSchedule {
  std::vector<SchedulePhase> phases;

  static ContactSchedule walking(int knots_single = 10, int knots_double = 6, DurationBounds single = {},
                                 DurationBounds dbl = {});

  /// Throws std::invalid_argument unless phases alternate single/double with
  /// alternating stance legs, knot counts are >= 2 and duration bounds are
  /// positive and ordered.
  void validate() const;
};

struct TranscriptionOptions {
  ExtensionBounds leg_length;     // geometric leg length in stance
  ExtensionBounds setpoint;       // actuator setpoint d
  double setpoint_rate_max = 5.0;  // |d_dot|, m/s
  double input_max = 100.0;        // |u|, m/s^2
  double step_width_min = 0.05;    // lateral half-width of the footholds, m
  double step_width_max = 0.2;
  double grf_min = 0.0;            // lower bound on axial stance force, N
  double body_height_min = 0.3;
};

/// One knot of the decoded decision vector.
struct KnotPoint {
  KnotState x = KnotState::Zero();
  KnotInput u = KnotInput::Zero();
};

/// Decoded decision vector for one step (half cycle).
struct GaitDecision {
  std::vector<KnotPoint> knots;
  std::vector<double> durations;  // one per half-cycle phase
  Vec3 left_foothold;             // stance foot during the first single stance
  Vec3 right_foothold;            // touchdown location of the swing foot
};

/// Index map of the flat decision vector.
class DecisionLayout {
 public:
  DecisionLayout() = default;
  DecisionLayout(int knots, int phases) : knots_(knots), phases_(phases) {}

  int knots() const { return knots_; }
  int phases() const { return phases_; }
  int state(int knot, int i) const { return knot * (kStateDim + kInputDim) + i; }
  int input(int knot, int i) const { return knot * (kStateDim + kInputDim) + kStateDim + i; }
  int duration(int phase) const { return knots_ * (kStateDim + kInputDim) + phase; }
  int foothold(Side side, int axis) const {
    return knots_ * (kStateDim + kInputDim) + phases_ + (side == Side::Left ? 0 : 3) + axis;
  }
  int size() const { return knots_ * (kStateDim + kInputDim) + phases_ + 6; }

 private:
  int knots_ = 0;
  int phases_ = 0;
};

enum class ConstraintKind {
  Defect,
  Periodicity,
  AverageSpeed,
  FootholdMirror,
  LegLengthMax,
  LegLengthMin,
  StanceForce,
};

struct ConstraintRow {
  ConstraintKind kind;
  int knot = -1;  // knot or interval index where applicable
  Side side = Side::Left;
  int component = 0;
};

struct ConstraintCounts {
  int defects = 0;
  int periodicity = 0;
  int speed = 0;
  int mirror = 0;
  int leg_length = 0;
  int stance_force = 0;
};

/// Mirror about the sagittal plane and exchange the legs (no forward shift).
/// Applying it twice is the identity.
KnotState mirror_swap(const KnotState& x);
KnotInput mirror_swap(const KnotInput& u);

/// State rate f(x, u) with the given legs in stance on the given footholds.
KnotState knot_rate(const ModelParams& params, const KnotState& x, const KnotInput& u, Phase phase,
                    const Vec3& left_foothold, const Vec3& right_foothold);

/// Trapezoidal collocation residual x1 - x0 - h/2 (f(x0,u0) + f(x1,u1)) within `phase`.
KnotState defect(const ModelParams& params, const KnotPoint& k0, const KnotPoint& k1, double h, Phase phase,
                 const Vec3& left_foothold, const Vec3& right_foothold);

/// Direct-collocation program for one periodic walking step at a target speed.
class GaitNlp {
 public:
  GaitNlp(const ModelParams& params, double target_speed, ContactSchedule schedule, TranscriptionOptions opts);

  const DecisionLayout& layout() const { return layout_; }
  const ContactSchedule& schedule() const { return schedule_; }
  const TranscriptionOptions& options() const { return opts_; }
  const ModelParams& params() const { return params_; }
  double target_speed() const { return target_speed_; }
  int half_phases() const { return 2; }
  /// First knot index of each half-cycle phase; phase p spans
  /// [phase_start(p), phase_start(p) + knots_p - 1].
  int phase_start(int p) const { return phase_start_[p]; }
  Phase interval_phase(int interval) const;
  int interval_phase_index(int interval) const;

  const std::vector<ConstraintRow>& equality_rows() const { return eq_rows_; }
  const std::vector<ConstraintRow>& inequality_rows() const { return ineq_rows_; }
  ConstraintCounts counts() const;
  /// Decision indices each equality / inequality row depends on.
  const std::vector<std::vector<int>>& equality_sparsity() const { return eq_sparsity_; }
  const std::vector<std::vector<int>>& inequality_sparsity() const { return ineq_sparsity_; }

  Eigen::VectorXd pack(const GaitDecision& d) const;
  GaitDecision unpack(const Eigen::VectorXd& z) const;

  /// Full-cycle energetic cost: trapezoid of u_l^2 + u_r^2, doubled for the
  /// mirrored second step.
  double objective(const Eigen::VectorXd& z, Eigen::VectorXd* grad = nullptr) const;
  void equalities(const Eigen::VectorXd& z, Eigen::VectorXd& c, Eigen::MatrixXd* jac) const;
  /// Expressed as g(z) <= 0.
  void inequalities(const Eigen::VectorXd& z, Eigen::VectorXd& g, Eigen::MatrixXd* jac) const;

  Eigen::VectorXd lower_bounds() const { return lower_; }
  Eigen::VectorXd upper_bounds() const { return upper_; }

  nlp::NlpProblem problem() const;

  /// Constant-velocity stance guess with springs loaded against gravity.
  Eigen::VectorXd initial_guess() const;

  /// Rescales a solution of a neighbouring speed onto this problem's speed.
  Eigen::VectorXd warm_start_from(const Eigen::VectorXd& other) const;

  /// Interpolates a solution of the same speed and phase sequence on a
  /// different knot grid onto this grid, phase by phase.
  Eigen::VectorXd regrid_from(const GaitNlp& other, const Eigen::VectorXd& z) const;

 private:
  bool knot_in_stance(int knot, Side side) const;
  std::array<int, 2 * (kStateDim + kInputDim) + 7> defect_columns(int interval) const;
  std::array<int, kStateDim + 3> leg_columns(int knot, Side side) const;

  ModelParams params_;
  double target_speed_;
  ContactSchedule schedule_;
  TranscriptionOptions opts_;
  DecisionLayout layout_;
  std::array<int, 3> phase_start_{};
  std::vector<ConstraintRow> eq_rows_;
  std::vector<ConstraintRow> ineq_rows_;
  std::vector<std::vector<int>> eq_sparsity_;
  std::vector<std::vector<int>> ineq_sparsity_;
  Eigen::VectorXd lower_, upper_;
};

}  // namespace aslip
