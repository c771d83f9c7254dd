#pragma once

#include <stdexcept>
#include <string>

#include "aslip/vec3.hpp"

namespace aslip {

/// Raised when a state cannot be evaluated (zero-length leg, inconsistent
/// contact flags, non-finite values).
class InvalidState : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Physical constants of the actuated spring-mass biped.
struct ModelParams {
  double mass = 30.0;              // kg
  double stiffness = 3000.0;       // N/m
  double damping = 2.0;            // N s/m
  double actuator_inertia = 10.0;  // kg, carried but unused by dynamics and cost
  double gravity = 9.81;           // m/s^2

  void validate() const;
};

/// Stable text fingerprint of the parameter set (hex FNV-1a of the 17-digit
/// decimal rendering). Used to tie saved artifacts to the model.
std::string fingerprint(const ModelParams& params);

enum class Side { Left, Right };
enum class Phase { SingleStanceLeft, SingleStanceRight, DoubleStance };

const char* to_string(Phase phase);
Phase phase_from_string(const std::string& name);

inline bool in_stance(Phase phase, Side side) {
  if (phase == Phase::DoubleStance) return true;
  return (phase == Phase::SingleStanceLeft) == (side == Side::Left);
}

inline Side other(Side s) { return s == Side::Left ? Side::Right : Side::Left; }

struct ExtensionBounds {
  double min = 0.55;
  double max = 0.95;
};

struct LegState {
  Vec3 foothold;
  double d = 0.0;      // actuator setpoint length
  double d_dot = 0.0;  // setpoint rate
  bool in_contact = false;
};

struct AslipState {
  Vec3 r;
  Vec3 v;
  LegState left;
  LegState right;
  Phase phase = Phase::DoubleStance;

  LegState& leg(Side s) { return s == Side::Left ? left : right; }
  const LegState& leg(Side s) const { return s == Side::Left ? left : right; }

  /// Throws InvalidState unless exactly the legs named by `phase` are in contact.
  void check_consistent() const;
};

/// Setpoint accelerations for both actuators.
struct LegInput {
  double left = 0.0;
  double right = 0.0;

  double operator[](Side s) const { return s == Side::Left ? left : right; }
};

struct LegLength {
  double length = 0.0;
  double rate = 0.0;
};

LegLength leg_length(const Vec3& r, const Vec3& foothold, const Vec3& v = {});

// Templated force law shared by the simulator (double) and the transcription
// (dual numbers). Magnitude k(d - l) + b(d_dot - l_dot) along foot -> body.
template <typename T>
Vec3T<T> spring_leg_force(const ModelParams& p, const Vec3T<T>& r, const Vec3T<T>& v,
                          const Vec3T<T>& foothold, const T& d, const T& d_dot) {
  using std::sqrt;
  const Vec3T<T> leg = r - foothold;
  const T len = sqrt(leg.squaredNorm());
  const Vec3T<T> dir = leg / len;
  const T len_rate = v.dot(dir);
  const T magnitude = T(p.stiffness) * (d - len) + T(p.damping) * (d_dot - len_rate);
  return dir * magnitude;
}

/// Axial spring force magnitude; nonnegative means the leg pushes.
template <typename T>
T spring_force_magnitude(const ModelParams& p, const Vec3T<T>& r, const Vec3T<T>& v,
                         const Vec3T<T>& foothold, const T& d, const T& d_dot) {
  using std::sqrt;
  const Vec3T<T> leg = r - foothold;
  const T len = sqrt(leg.squaredNorm());
  const T len_rate = v.dot(leg) / len;
  return T(p.stiffness) * (d - len) + T(p.damping) * (d_dot - len_rate);
}

/// Force on the body from one leg. Swing legs are massless and exert nothing.
Vec3 leg_force(const ModelParams& params, const Vec3& r, const Vec3& v, const LegState& leg);

struct StateDerivative {
  Vec3 r_dot;
  Vec3 v_dot;
  double left_d_dot = 0.0;
  double left_d_ddot = 0.0;
  double right_d_dot = 0.0;
  double right_d_ddot = 0.0;
};

StateDerivative dynamics(const ModelParams& params, const AslipState& state, const LegInput& input);

struct GroundReaction {
  Vec3 left;
  Vec3 right;

  const Vec3& operator[](Side s) const { return s == Side::Left ? left : right; }
};

GroundReaction grf(const ModelParams& params, const AslipState& state);

// Energy bookkeeping: d/dt mechanical_energy == actuator_power - damper_dissipation.
double mechanical_energy(const ModelParams& params, const AslipState& state);
double actuator_power(const ModelParams& params, const AslipState& state);
double damper_dissipation(const ModelParams& params, const AslipState& state);

}  // namespace aslip
