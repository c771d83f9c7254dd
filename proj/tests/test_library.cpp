#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "aslip/library.hpp"
#include "aslip/swing.hpp"

using namespace aslip;

namespace {

const ModelParams kParams;

std::vector<double> grid_speeds() {
  std::vector<double> s;
  for (int i = 0; i <= 20; ++i) s.push_back(0.1 * i);
  return s;
}

struct Built {
  GaitOptions opts;
  GaitLibrary lib;
  std::map<int, nlp::SolveReport> reports;  // keyed by speed in 0.1 m/s units
};

const Built& built() {
  static const Built b = [] {
    Built out;
    out.lib = build_library(kParams, grid_speeds(), out.opts, [&](const OptimizedGait& og) {
      out.reports[static_cast<int>(std::lround(og.gait.speed * 10))] = og.report;
    });
    return out;
  }();
  return b;
}

const GaitTrajectory& gait_at(double speed) { return built().lib.gaits.at(static_cast<int>(std::lround(speed * 10))); }

bool same(const Vec3& a, const Vec3& b) { return a.x == b.x && a.y == b.y && a.z == b.z; }
Vec3 mirrored(const Vec3& p) { return {p.x, -p.y, p.z}; }

std::string temp_path(const char* name) { return std::string("/tmp/aslip_test_") + name; }

bool identical(const GaitTrajectory& a, const GaitTrajectory& b) {
  if (a.speed != b.speed || a.period != b.period || a.stride != b.stride) return false;
  if (a.single_duration != b.single_duration || a.double_duration != b.double_duration) return false;
  if (a.samples() != b.samples() || a.phase != b.phase || a.label != b.label) return false;
  for (int i = 0; i < a.samples(); ++i) {
    if (!same(a.body_pos[i], b.body_pos[i]) || !same(a.body_vel[i], b.body_vel[i])) return false;
    for (int s = 0; s < 2; ++s) {
      if (!same(a.foot_pos[s][i], b.foot_pos[s][i]) || !same(a.foot_vel[s][i], b.foot_vel[s][i])) return false;
      const JointAngles &p = a.baseline[i][s], &q = b.baseline[i][s];
      if (p.roll != q.roll || p.pitch != q.pitch || p.knee != q.knee) return false;
    }
  }
  for (int s = 0; s < 2; ++s) {
    if (a.setpoint[s] != b.setpoint[s] || a.setpoint_rate[s] != b.setpoint_rate[s] || a.input[s] != b.input[s])
      return false;
    if (!same(a.initial_foot[s], b.initial_foot[s])) return false;
  }
  if (a.footsteps.size() != b.footsteps.size()) return false;
  for (std::size_t i = 0; i < a.footsteps.size(); ++i)
    if (a.footsteps[i].side != b.footsteps[i].side || a.footsteps[i].time != b.footsteps[i].time ||
        !same(a.footsteps[i].position, b.footsteps[i].position))
      return false;
  if (a.knot_time != b.knot_time || a.knot_state.size() != b.knot_state.size()) return false;
  for (std::size_t k = 0; k < a.knot_state.size(); ++k)
    if (a.knot_state[k] != b.knot_state[k] || a.knot_input[k] != b.knot_input[k]) return false;
  return true;
}

double frame_distance(const ReferenceFrame& a, const ReferenceFrame& b) {
  double d = std::max(norm(a.body_pos - b.body_pos), norm(a.body_vel - b.body_vel));
  for (int s = 0; s < 2; ++s) {
    d = std::max({d, norm(a.foot_pos[s] - b.foot_pos[s]), norm(a.foot_vel[s] - b.foot_vel[s]),
                  std::abs(a.setpoint[s] - b.setpoint[s])});
  }
  return d;
}

}  // namespace

TEST_CASE("library covers 0 to 2 m/s and every gait passes its audit") {
  const GaitLibrary& lib = built().lib;
  REQUIRE(lib.gaits.size() == 21);
  for (std::size_t i = 0; i < lib.gaits.size(); ++i) {
    const GaitTrajectory& g = lib.gaits[i];
    CAPTURE(g.speed);
    CHECK(g.speed == doctest::Approx(0.1 * i).epsilon(1e-12));
    CHECK(g.samples() == 201);
    CHECK(built().reports.at(static_cast<int>(i)).max_violation <= 1e-6);
    const GaitAudit a = audit_gait(kParams, g);
    CHECK(a.consistent_lengths);
    CHECK(a.periodicity_error <= 1e-6);
    CHECK(a.half_cycle_error <= 1e-6);
    CHECK(a.mean_speed_error <= 1e-3);
    CHECK(a.min_vertical_grf >= -1e-8);
  }
  CHECK(lib.stride_decreases().empty());
}

TEST_CASE("1.0 m/s gait peaks in single stance and bottoms out in double stance") {
  const GaitTrajectory& g = gait_at(1.0);
  int hi = 0, lo = 0;
  for (int i = 0; i < g.samples(); ++i) {
    if (g.body_pos[i].z > g.body_pos[hi].z) hi = i;
    if (g.body_pos[i].z < g.body_pos[lo].z) lo = i;
  }
  CHECK(g.label[hi] != Phase::DoubleStance);
  CHECK(g.label[lo] == Phase::DoubleStance);
}

TEST_CASE("swing foot apex is exactly the clearance height") {
  const GaitTrajectory& g = gait_at(1.0);
  const Footstep& td = g.footsteps.at(0);
  REQUIRE(td.side == Side::Right);
  const SwingProfile swing(g.initial_foot[1], td.position, g.single_duration, 0.2);
  CHECK(swing.position(0.5 * g.single_duration).z == 0.2);
  double top = 0.0;
  for (int i = 0; i < g.samples(); ++i) {
    top = std::max(top, std::max(g.foot_pos[0][i].z, g.foot_pos[1][i].z));
    if (g.time_at(i) <= g.single_duration)
      CHECK(norm(g.foot_pos[1][i] - swing.position(g.time_at(i))) < 1e-12);
  }
  CHECK(top <= 0.2 + 1e-12);
  CHECK(top > 0.19);
}

TEST_CASE("baseline angles reproduce the sampled feet") {
  const GaitOptions& opts = built().opts;
  for (double speed : {0.0, 0.5, 1.0, 2.0}) {
    const GaitTrajectory& g = gait_at(speed);
    double worst = 0.0, jump = 0.0;
    for (int i = 0; i < g.samples(); ++i) {
      worst = std::max(worst, norm(g.body_pos[i] + fk(opts.left_leg, g.baseline[i][0]) - g.foot_pos[0][i]));
      worst = std::max(worst, norm(g.body_pos[i] + fk(opts.right_leg, g.baseline[i][1]) - g.foot_pos[1][i]));
      if (i > 0)
        for (int s = 0; s < 2; ++s) {
          const JointAngles &a = g.baseline[i][s], &b = g.baseline[i - 1][s];
          jump = std::max({jump, std::abs(a.roll - b.roll), std::abs(a.pitch - b.pitch), std::abs(a.knee - b.knee)});
        }
    }
    CAPTURE(speed);
    CHECK(worst < 1e-9);
    CHECK(jump < 0.1);
  }
}

TEST_CASE("standing gait is symmetric and does not travel") {
  const GaitTrajectory& g = gait_at(0.0);
  CHECK(std::abs(g.stride) < 1e-6);
  const int mid = (g.samples() - 1) / 2;
  for (int i = 0; i <= mid; ++i) {
    CHECK(norm(g.body_pos[i + mid] - (mirrored(g.body_pos[i]) + Vec3{0.5 * g.stride, 0, 0})) < 1e-6);
    CHECK(std::abs(g.setpoint[0][i + mid] - g.setpoint[1][i]) < 1e-6);
  }
}

TEST_CASE("sampling examples") {
  const GaitLibrary& lib = built().lib;
  const GaitTrajectory& g3 = gait_at(0.3);

  SUBCASE("grid speed at phase zero returns the stored sample") {
    const ReferenceFrame r = sample(lib, 0.3, 0.0);
    CHECK(same(r.body_pos, g3.body_pos[0]));
    CHECK(same(r.body_vel, g3.body_vel[0]));
    CHECK(same(r.foot_pos[1], g3.foot_pos[1][0]));
    CHECK(r.setpoint[0] == g3.setpoint[0][0]);
    CHECK(r.baseline[1].knee == g3.baseline[0][1].knee);
    CHECK(r.label == g3.label[0]);
    CHECK_FALSE(r.speed_clamped);
  }

  SUBCASE("0.05 m/s is the midpoint of the first two entries") {
    const GaitTrajectory &a = lib.gaits[0], &b = lib.gaits[1];
    for (int i : {0, 37, 150}) {
      const double phase = a.phase[i];
      const ReferenceFrame r = sample(lib, 0.05, phase);
      CHECK(norm(r.body_pos - 0.5 * (a.body_pos[i] + b.body_pos[i])) < 1e-15);
      CHECK(norm(r.body_vel - 0.5 * (a.body_vel[i] + b.body_vel[i])) < 1e-15);
      for (int s = 0; s < 2; ++s) {
        CHECK(norm(r.foot_pos[s] - 0.5 * (a.foot_pos[s][i] + b.foot_pos[s][i])) < 1e-15);
        CHECK(norm(r.foot_vel[s] - 0.5 * (a.foot_vel[s][i] + b.foot_vel[s][i])) < 1e-15);
        CHECK(r.setpoint[s] == doctest::Approx(0.5 * (a.setpoint[s][i] + b.setpoint[s][i])).epsilon(1e-15));
        CHECK(r.baseline[s].pitch ==
              doctest::Approx(0.5 * (a.baseline[i][s].pitch + b.baseline[i][s].pitch)).epsilon(1e-14));
      }
    }
  }

  SUBCASE("phase wrap is continuous up to one stride") {
    for (double speed : {0.0, 0.7, 1.55}) {
      const ReferenceFrame end = sample(lib, speed, 1.0 - 1e-9), start = sample(lib, speed, 0.0);
      const double stride = end.body_pos.x - start.body_pos.x;
      CHECK(norm(end.body_pos - (start.body_pos + Vec3{stride, 0, 0})) < 1e-6);
      CHECK(norm(end.body_vel - start.body_vel) < 1e-5);
    }
  }

  SUBCASE("out of range speeds clamp and flag") {
    const ReferenceFrame over = sample(lib, 2.5, 0.2), top = sample(lib, 2.0, 0.2);
    CHECK(over.speed_clamped);
    CHECK(same(over.body_pos, top.body_pos));
    CHECK(sample(lib, -0.1, 0.2).speed_clamped);
    CHECK_THROWS_AS(sample(lib, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(sample(lib, 1.0, -0.01), std::invalid_argument);
  }
}

TEST_CASE("references are Lipschitz in commanded speed") {
  const GaitLibrary& lib = built().lib;
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> S(0.0, 1.99), P(0.0, 0.999);
  const double eps = 1e-6;
  for (int i = 0; i < 200; ++i) {
    const double s = S(rng), phase = P(rng);
    CHECK(frame_distance(sample(lib, s, phase), sample(lib, s + eps, phase)) < 200 * eps);
  }
}

TEST_CASE("clock advance examples") {
  CHECK(advance_clock(0.4, 0.7, 0.7) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(advance_clock(0.9, 0.2 * 0.8, 0.8) == doctest::Approx(0.1).epsilon(1e-12));
  double phase = 0.25;
  for (int i = 0; i < 33; ++i) phase = advance_clock(phase, 1.0 / 33.0, 1.0);
  CHECK(std::abs(phase - 0.25) < 1e-12);
  for (double p = 0.0; p < 1.0; p += 0.013) {
    const double q = advance_clock(p, 0.0123, 0.61);
    CHECK(q >= 0.0);
    CHECK(q < 1.0);
  }
  CHECK_THROWS_AS(advance_clock(0.1, -0.01, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(advance_clock(0.1, 0.01, 0.0), std::invalid_argument);
}

TEST_CASE("save and load round trip bit for bit") {
  const std::string path = temp_path("lib.json");
  save_library(built().lib, path);
  const GaitLibrary back = load_library(path, &kParams);
  REQUIRE(back.gaits.size() == 21);
  CHECK(back.format_version == kLibraryFormatVersion);
  CHECK(fingerprint(back.params) == fingerprint(kParams));
  for (std::size_t i = 0; i < back.gaits.size(); ++i) CHECK(identical(back.gaits[i], built().lib.gaits[i]));

  const std::string gpath = temp_path("gait.json");
  save_gait(gait_at(0.8), kParams, gpath);
  CHECK(identical(load_gait(gpath, &kParams), gait_at(0.8)));
  std::remove(gpath.c_str());
  std::remove(path.c_str());
}

TEST_CASE("corrupted documents are rejected") {
  const std::string path = temp_path("one.json");
  GaitLibrary small;
  small.params = kParams;
  small.gaits = {gait_at(0.4), gait_at(0.5)};
  save_library(small, path);
  std::string text;
  {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  const auto write = [&](const std::string& body) {
    std::ofstream out(path, std::ios::trunc);
    out << body;
  };

  SUBCASE("version tag") {
    std::string t = text;
    const auto at = t.find("\"format_version\": 1");
    REQUIRE(at != std::string::npos);
    t.replace(at, 19, "\"format_version\": 7");
    write(t);
    CHECK_THROWS_WITH_AS(load_library(path), doctest::Contains("format_version 7"), LibraryFormatError);
  }
  SUBCASE("truncation reports a byte offset") {
    write(text.substr(0, text.size() / 2));
    CHECK_THROWS_WITH_AS(load_library(path), doctest::Contains("parse error at byte"), LibraryFormatError);
  }
  SUBCASE("different model") {
    ModelParams other = kParams;
    other.stiffness = 3100.0;
    CHECK_THROWS_AS(load_library(path, &other), LibraryFormatError);
    CHECK_NOTHROW(load_library(path, &kParams));
  }
  SUBCASE("edited parameter without matching fingerprint") {
    std::string t = text;
    const auto at = t.find("\"stiffness\": 3000");
    REQUIRE(at != std::string::npos);
    t.replace(at, 17, "\"stiffness\": 3001");
    write(t);
    CHECK_THROWS_AS(load_library(path), LibraryFormatError);
  }
  std::remove(path.c_str());
}

TEST_CASE("csv export writes a header and one row per sample") {
  std::ostringstream out;
  write_gait_csv(gait_at(1.0), out, {"speed 1.0"});
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "# speed 1.0");
  int rows = 0;
  std::getline(in, line);
  const auto columns = std::count(line.begin(), line.end(), ',');
  while (std::getline(in, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == columns);
    ++rows;
  }
  CHECK(rows == 201);
}

TEST_CASE("feasible perturbations never lower the cost") {
  const GaitOptions& opts = built().opts;
  for (int key : {5, 10, 15}) {
    const nlp::SolveReport& r = built().reports.at(key);
    const GaitNlp nlp(kParams, 0.1 * key, opts.schedule(), opts.bounds);
    Eigen::VectorXd c, g;
    Eigen::MatrixXd Je, Jg;
    nlp.equalities(r.x, c, &Je);
    nlp.inequalities(r.x, g, &Jg);
    const Eigen::VectorXd lo = nlp.lower_bounds(), hi = nlp.upper_bounds();

    // active set: equalities, inequalities within 1e-6 of their bound, and
    // variables pinned at a box bound
    std::vector<Eigen::VectorXd> rows;
    for (int i = 0; i < Je.rows(); ++i) rows.push_back(Je.row(i).transpose());
    for (int i = 0; i < Jg.rows(); ++i)
      if (g(i) > -1e-6) rows.push_back(Jg.row(i).transpose());
    for (int i = 0; i < r.x.size(); ++i)
      if (r.x(i) - lo(i) < 1e-7 || hi(i) - r.x(i) < 1e-7) rows.push_back(Eigen::VectorXd::Unit(r.x.size(), i));
    Eigen::MatrixXd A(rows.size(), r.x.size());
    for (std::size_t i = 0; i < rows.size(); ++i) A.row(i) = rows[i].transpose();
    const Eigen::MatrixXd N = Eigen::FullPivLU<Eigen::MatrixXd>(A).kernel();
    REQUIRE(N.cols() > 0);

    std::mt19937 rng(key);
    std::normal_distribution<double> N01;
    const double f0 = nlp.objective(r.x);
    for (int t = 0; t < 20; ++t) {
      Eigen::VectorXd w(N.cols());
      for (int i = 0; i < w.size(); ++i) w(i) = N01(rng);
      const Eigen::VectorXd p = N * w;
      const Eigen::VectorXd z = r.x + 1e-4 * p / p.norm();
      CHECK(nlp.objective(z) >= f0 - 1e-9);
    }
  }
}
