#pragma once

#include <stdexcept>

#include "aslip/vec3.hpp"

namespace aslip {

/// Thrown when a foot target lies outside the reachable annulus of a leg.
class OutOfWorkspace : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LegGeometry {
  double thigh = 0.5;
  double shank = 0.5;
  Vec3 hip_offset;  // hip position in the body frame

  static LegGeometry left() { return {0.5, 0.5, {0.0, 0.1, 0.0}}; }
  static LegGeometry right() { return {0.5, 0.5, {0.0, -0.1, 0.0}}; }
  void validate() const;
};

/// Hip roll about the forward axis, hip pitch and knee pitch. A positive knee
/// angle bends the shank backwards (knee forward).
struct JointAngles {
  double roll = 0.0;
  double pitch = 0.0;
  double knee = 0.0;
};

/// Foot position relative to the body origin.
Vec3 fk(const LegGeometry& leg, const JointAngles& q);

/// Closed-form inverse on the knee-forward branch.
JointAngles ik(const LegGeometry& leg, const Vec3& foot);

}  // namespace aslip
