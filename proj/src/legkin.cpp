#include "aslip/legkin.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace aslip {

void LegGeometry::validate() const {
  if (!(thigh > 0.0) || !(shank > 0.0)) throw std::invalid_argument("leg segment lengths must be positive");
}

Vec3 fk(const LegGeometry& leg, const JointAngles& q) {
  // sagittal chain in the rolled leg plane, then roll about x
  const double x = leg.thigh * std::sin(q.pitch) + leg.shank * std::sin(q.pitch - q.knee);
  const double z = -leg.thigh * std::cos(q.pitch) - leg.shank * std::cos(q.pitch - q.knee);
  const double c = std::cos(q.roll), s = std::sin(q.roll);
  return leg.hip_offset + Vec3{x, -s * z, c * z};
}

JointAngles ik(const LegGeometry& leg, const Vec3& foot) {
  const Vec3 p = foot - leg.hip_offset;
  const double depth = std::hypot(p.y, p.z);
  const double reach_sq = p.x * p.x + depth * depth;
  const double l1 = leg.thigh, l2 = leg.shank;
  const double outer = l1 + l2, inner = std::abs(l1 - l2);
  const double dist = std::sqrt(reach_sq);
  const double slack = 1e-12 * outer;
  if (dist > outer + slack || dist <= inner + slack || depth <= slack) {
    throw OutOfWorkspace("foot target at distance " + std::to_string(dist) + " m is outside the leg workspace [" +
                         std::to_string(inner) + ", " + std::to_string(outer) + "]");
  }
  JointAngles q;
  q.roll = std::atan2(p.y, -p.z);
  const double cos_knee = std::clamp((reach_sq - l1 * l1 - l2 * l2) / (2.0 * l1 * l2), -1.0, 1.0);
  q.knee = std::acos(cos_knee);
  q.pitch = std::atan2(p.x, depth) + std::atan2(l2 * std::sin(q.knee), l1 + l2 * cos_knee);
  return q;
}

}  // namespace aslip
