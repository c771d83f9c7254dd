#pragma once

#include <cmath>

namespace aslip {

/// Minimal 3-vector usable with both double and forward-mode dual scalars.
template <typename T>
struct Vec3T {
  T x{}, y{}, z{};

  Vec3T() = default;
  Vec3T(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}

  template <typename U>
  static Vec3T from(const Vec3T<U>& o) {
    return {T(o.x), T(o.y), T(o.z)};
  }

  Vec3T& operator+=(const Vec3T& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3T& operator-=(const Vec3T& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  friend Vec3T operator+(Vec3T a, const Vec3T& b) { return a += b; }
  friend Vec3T operator-(Vec3T a, const Vec3T& b) { return a -= b; }
  friend Vec3T operator-(const Vec3T& a) { return {-a.x, -a.y, -a.z}; }
  friend Vec3T operator*(const T& s, const Vec3T& a) { return {s * a.x, s * a.y, s * a.z}; }
  friend Vec3T operator*(const Vec3T& a, const T& s) { return s * a; }
  friend Vec3T operator/(const Vec3T& a, const T& s) { return {a.x / s, a.y / s, a.z / s}; }
  friend bool operator==(const Vec3T& a, const Vec3T& b) {
    return a.x == b.x && a.y == b.y && a.z == b.z;
  }

  T dot(const Vec3T& o) const { return x * o.x + y * o.y + z * o.z; }
  T squaredNorm() const { return dot(*this); }
};

using Vec3 = Vec3T<double>;

inline double norm(const Vec3& v) { return std::sqrt(v.squaredNorm()); }

}  // namespace aslip
