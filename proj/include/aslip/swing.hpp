#pragma once

#include <array>

#include "aslip/vec3.hpp"

namespace aslip {

/// Quintic x(t) = sum c[i] t^i on [0, duration].
struct Quintic {
  std::array<double, 6> c{};
  double duration = 1.0;

  double position(double t) const;
  double velocity(double t) const;
  double acceleration(double t) const;
  double jerk(double t) const;
};

/// Rest-to-rest minimum-jerk profile from x0 to x1 over `duration` (> 0).
Quintic min_jerk_1d(double x0, double x1, double duration);

/// Swing-foot path: minimum-jerk in x and y, vertical motion spliced from two
/// minimum-jerk segments that meet at `clearance` at the temporal midpoint.
class SwingProfile {
 public:
  static constexpr double kDefaultClearance = 0.2;

  SwingProfile() = default;
  SwingProfile(const Vec3& liftoff, const Vec3& touchdown, double duration,
               double clearance = kDefaultClearance);

  /// t is clamped to [0, duration].
  Vec3 position(double t) const;
  Vec3 velocity(double t) const;
  Vec3 acceleration(double t) const;

  const Vec3& liftoff() const { return liftoff_; }
  const Vec3& touchdown() const { return touchdown_; }
  double duration() const { return duration_; }
  double clearance() const { return clearance_; }

 private:
  Vec3 liftoff_, touchdown_;
  double duration_ = 1.0;
  double clearance_ = kDefaultClearance;
  Quintic x_, y_, z_up_, z_down_;
};

}  // namespace aslip
