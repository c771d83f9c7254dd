#include "aslip/swing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

#include <Eigen/Dense>

namespace aslip {

double Quintic::position(double t) const {
  return c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
}

double Quintic::velocity(double t) const {
  return c[1] + t * (2 * c[2] + t * (3 * c[3] + t * (4 * c[4] + t * 5 * c[5])));
}

double Quintic::acceleration(double t) const {
  return 2 * c[2] + t * (6 * c[3] + t * (12 * c[4] + t * 20 * c[5]));
}

double Quintic::jerk(double t) const { return 6 * c[3] + t * (24 * c[4] + t * 60 * c[5]); }

Quintic min_jerk_1d(double x0, double x1, double duration) {
  if (!(duration > 0.0) || !std::isfinite(duration)) {
    throw std::invalid_argument("min_jerk_1d: duration must be positive");
  }
  const double delta = x1 - x0;
  const double t3 = duration * duration * duration;
  Quintic q;
  q.duration = duration;
  q.c = {x0, 0.0, 0.0, 10.0 * delta / t3, -15.0 * delta / (t3 * duration),
         6.0 * delta / (t3 * duration * duration)};
  return q;
}

namespace {

// Vertical swing: up arc from rest at z0 to the apex, down arc from the apex to
// rest at z1. Apex height and zero velocity are pinned; acceleration and jerk are
// matched across the splice (the free-acceleration optimality condition).
std::pair<Quintic, Quintic> vertical_arcs(double z0, double z1, double apex, double half) {
  const double h = half, h2 = h * h, h3 = h2 * h, h4 = h3 * h, h5 = h4 * h;
  // unknowns: a3 a4 a5 (up), w2 w3 w4 w5 (down)
  Eigen::Matrix<double, 7, 7> A = Eigen::Matrix<double, 7, 7>::Zero();
  Eigen::Matrix<double, 7, 1> b = Eigen::Matrix<double, 7, 1>::Zero();
  // up(h) = apex
  A.row(0) << h3, h4, h5, 0, 0, 0, 0;
  b(0) = apex - z0;
  // up'(h) = 0
  A.row(1) << 3 * h2, 4 * h3, 5 * h4, 0, 0, 0, 0;
  // down(h) = z1
  A.row(2) << 0, 0, 0, h2, h3, h4, h5;
  b(2) = z1 - apex;
  // down'(h) = 0
  A.row(3) << 0, 0, 0, 2 * h, 3 * h2, 4 * h3, 5 * h4;
  // down''(h) = 0
  A.row(4) << 0, 0, 0, 2, 6 * h, 12 * h2, 20 * h3;
  // up''(h) = down''(0)
  A.row(5) << 6 * h, 12 * h2, 20 * h3, -2, 0, 0, 0;
  // up'''(h) = down'''(0)
  A.row(6) << 6, 24 * h, 60 * h2, 0, -6, 0, 0;
  const Eigen::Matrix<double, 7, 1> s = A.fullPivLu().solve(b);
  Quintic up, down;
  up.duration = down.duration = h;
  up.c = {z0, 0.0, 0.0, s(0), s(1), s(2)};
  down.c = {apex, 0.0, s(3), s(4), s(5), s(6)};
  return {up, down};
}

}  // namespace

SwingProfile::SwingProfile(const Vec3& liftoff, const Vec3& touchdown, double duration, double clearance)
    : liftoff_(liftoff), touchdown_(touchdown), duration_(duration), clearance_(clearance) {
  if (!(duration > 0.0)) throw std::invalid_argument("swing duration must be positive");
  if (!(clearance > std::max(liftoff.z, touchdown.z))) {
    throw std::invalid_argument("swing clearance must be above both footholds");
  }
  x_ = min_jerk_1d(liftoff.x, touchdown.x, duration);
  y_ = min_jerk_1d(liftoff.y, touchdown.y, duration);
  std::tie(z_up_, z_down_) = vertical_arcs(liftoff.z, touchdown.z, clearance, 0.5 * duration);
}

Vec3 SwingProfile::position(double t) const {
  t = std::clamp(t, 0.0, duration_);
  const double half = 0.5 * duration_;
  const double z = t < half ? z_up_.position(t) : z_down_.position(t - half);
  return {x_.position(t), y_.position(t), z};
}

Vec3 SwingProfile::velocity(double t) const {
  t = std::clamp(t, 0.0, duration_);
  const double half = 0.5 * duration_;
  const double z = t <= half ? z_up_.velocity(t) : z_down_.velocity(t - half);
  return {x_.velocity(t), y_.velocity(t), z};
}

Vec3 SwingProfile::acceleration(double t) const {
  t = std::clamp(t, 0.0, duration_);
  const double half = 0.5 * duration_;
  const double z = t <= half ? z_up_.acceleration(t) : z_down_.acceleration(t - half);
  return {x_.acceleration(t), y_.acceleration(t), z};
}

}  // namespace aslip
