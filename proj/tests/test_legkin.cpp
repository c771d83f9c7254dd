#include <doctest.h>

#include <random>

#include "aslip/legkin.hpp"

using namespace aslip;

namespace {

double dist(const Vec3& a, const Vec3& b) { return norm(a - b); }

}  // namespace

TEST_CASE("forward kinematics examples") {
  const LegGeometry leg = LegGeometry::left();
  const Vec3 straight = fk(leg, {});
  CHECK(straight.x == 0.0);
  CHECK(straight.y == doctest::Approx(0.1));
  CHECK(straight.z == doctest::Approx(-1.0));

  // Planar two-link oracle: hip-to-foot distance from the law of cosines with
  // the interior angle pi - knee.
  for (double knee : {0.3, M_PI / 2, 2.0}) {
    const Vec3 f = fk(leg, {0.0, 0.0, knee});
    const double expected = std::sqrt(0.25 + 0.25 - 2 * 0.25 * std::cos(M_PI - knee));
    CHECK(dist(f, leg.hip_offset) == doctest::Approx(expected).epsilon(1e-14));
  }
  CHECK(dist(fk(leg, {0, 0, M_PI / 2}), leg.hip_offset) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));

  // roll about the forward axis
  const double a = M_PI / 6;
  const Vec3 rolled = fk(leg, {a, 0.0, 0.0}) - leg.hip_offset;
  CHECK(rolled.x == 0.0);
  CHECK(rolled.y == doctest::Approx(std::sin(a)).epsilon(1e-15));
  CHECK(rolled.z == doctest::Approx(-std::cos(a)).epsilon(1e-15));
}

TEST_CASE("inverse kinematics examples") {
  const LegGeometry leg = LegGeometry::right();
  const JointAngles zero = ik(leg, fk(leg, {}));
  CHECK(std::abs(zero.roll) < 1e-12);
  CHECK(std::abs(zero.pitch) < 1e-6);
  CHECK(std::abs(zero.knee) < 1e-6);

  // full extension along an oblique direction
  const Vec3 dir{0.3, 0.1, -0.9};
  const Vec3 boundary = leg.hip_offset + dir / norm(dir);
  CHECK(ik(leg, boundary).knee == doctest::Approx(0.0).epsilon(1e-6));

  CHECK_THROWS_AS(ik(leg, leg.hip_offset + Vec3{0, 0, -1.01}), OutOfWorkspace);
  CHECK_THROWS_AS(ik(leg, leg.hip_offset), OutOfWorkspace);
  CHECK_THROWS_AS((LegGeometry{0.0, 0.5, {}}.validate()), std::invalid_argument);
}

TEST_CASE("fk of ik reproduces random reachable targets") {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const LegGeometry leg = LegGeometry::left();
  int tested = 0;
  while (tested < 500) {
    const Vec3 p = leg.hip_offset + Vec3{0.6 * U(rng), 0.4 * U(rng), -0.2 - 0.75 * std::abs(U(rng))};
    const double d = dist(p, leg.hip_offset);
    if (d > 0.999 || d < 0.05) continue;
    const JointAngles q = ik(leg, p);
    CHECK(dist(fk(leg, q), p) < 1e-9);
    CHECK(q.knee >= 0.0);
    CHECK(q.knee < M_PI);
    ++tested;
  }
}

TEST_CASE("ik of fk recovers angles away from singularities") {
  std::mt19937 rng(22);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const LegGeometry leg = LegGeometry::right();
  for (int i = 0; i < 300; ++i) {
    const JointAngles q{0.5 * U(rng), 0.8 * U(rng), 0.2 + 1.2 * std::abs(U(rng))};
    const JointAngles back = ik(leg, fk(leg, q));
    CHECK(back.roll == doctest::Approx(q.roll).epsilon(1e-9));
    CHECK(back.pitch == doctest::Approx(q.pitch).epsilon(1e-9));
    CHECK(back.knee == doctest::Approx(q.knee).epsilon(1e-9));
  }
}

TEST_CASE("lateral mirror negates roll only") {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  LegGeometry centered;
  for (int i = 0; i < 100; ++i) {
    const Vec3 p{0.4 * U(rng), 0.3 * U(rng), -0.5 - 0.3 * std::abs(U(rng))};
    const JointAngles a = ik(centered, p), b = ik(centered, {p.x, -p.y, p.z});
    CHECK(b.roll == doctest::Approx(-a.roll).epsilon(1e-12));
    CHECK(b.pitch == doctest::Approx(a.pitch).epsilon(1e-12));
    CHECK(b.knee == doctest::Approx(a.knee).epsilon(1e-12));
  }
}
