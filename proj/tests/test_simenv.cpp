#include <doctest.h>

#include <map>
#include <sstream>

#include "aslip/simenv.hpp"

using namespace aslip;

namespace {

const ModelParams kParams;

struct Fixture {
  std::shared_ptr<GaitLibrary> lib;
  std::map<int, OptimizedGait> solved;  // keyed by speed in 0.1 m/s units
};

// Library up to 1.0 m/s; enough for replay and environment checks.
const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture out;
    std::vector<double> speeds;
    for (int i = 0; i <= 10; ++i) speeds.push_back(0.1 * i);
    out.lib = std::make_shared<GaitLibrary>(build_library(kParams, speeds, {}, [&](const OptimizedGait& og) {
      out.solved[static_cast<int>(std::lround(og.gait.speed * 10))] = og;
    }));
    return out;
  }();
  return f;
}

AslipState stance_state() {
  AslipState s;
  s.r = {0.05, 0.08, 0.9};
  s.v = {0.6, -0.1, 0.2};
  s.left = {{0.0, 0.1, 0.0}, 0.97, 0.1, true};
  s.right = {{0.3, -0.1, 0.0}, 0.9, 0.0, false};
  s.phase = Phase::SingleStanceLeft;
  return s;
}

AslipState run(const AslipState& s0, double T, int n) {
  AslipState s = s0;
  for (int i = 0; i < n; ++i) s = integrate(kParams, s, LegInput{0.4, -0.2}, T / n);
  return s;
}

double distance(const AslipState& a, const AslipState& b) {
  return std::max({norm(a.r - b.r), norm(a.v - b.v), std::abs(a.left.d - b.left.d),
                   std::abs(a.left.d_dot - b.left.d_dot)});
}

Action zeros() { return Action(kActionDim, 0.0); }

}  // namespace

TEST_CASE("free fall under a vanishing leg force") {
  ModelParams limp;
  limp.stiffness = 1e-300;
  limp.damping = 1e-300;
  AslipState s = stance_state();
  s.v = {};
  const double vz0 = s.v.z;
  for (int i = 0; i < 200; ++i) s = integrate(limp, s, LegInput{}, 0.0005);
  CHECK(s.v.z - vz0 == doctest::Approx(-0.981).epsilon(1e-12));
  CHECK(s.r.z == doctest::Approx(0.9 - 0.5 * 9.81 * 0.01).epsilon(1e-12));
}

TEST_CASE("energy balance over substeps of a stance arc") {
  AslipState s = stance_state();
  const double h = 0.0005;
  const LegInput u{0.0, 0.0};
  double worst = 0.0;
  for (int i = 0; i < 400; ++i) {
    const AslipState mid = integrate(kParams, s, u, 0.5 * h);
    const AslipState next = integrate(kParams, s, u, h);
    const auto net = [&](const AslipState& x) { return actuator_power(kParams, x) - damper_dissipation(kParams, x); };
    const double work = h / 6.0 * (net(s) + 4.0 * net(mid) + net(next));
    worst = std::max(worst, std::abs(mechanical_energy(kParams, next) - mechanical_energy(kParams, s) - work));
    s = next;
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("RK4 converges at fourth order") {
  const AslipState s0 = stance_state();
  const double T = 0.2;
  const AslipState ref = run(s0, T, 6400);
  const double e1 = distance(run(s0, T, 50), ref);
  const double e2 = distance(run(s0, T, 100), ref);
  const double e3 = distance(run(s0, T, 200), ref);
  CHECK(std::log2(e1 / e2) == doctest::Approx(4.0).epsilon(0.05));
  CHECK(std::log2(e2 / e3) == doctest::Approx(4.0).epsilon(0.05));

  AslipState bad = s0;
  bad.r = bad.left.foothold;
  CHECK_THROWS_AS(integrate(kParams, bad, LegInput{}, 0.001), SimulationFault);
  CHECK_THROWS_AS(integrate(kParams, s0, LegInput{}, 0.0), std::invalid_argument);
}

TEST_CASE("open-loop replay follows the optimized cycle") {
  const OptimizedGait& og = fixture().solved.at(10);
  const ReplayLog log = rollout_open_loop(kParams, og.gait);
  CHECK(log.time.size() == 201);
  CHECK(log.max_body_deviation <= 0.01);
  CHECK_FALSE(log.contact_fault);
  CHECK(log.min_vertical_grf >= -1e-6);
  CHECK(log.mean_forward_velocity == doctest::Approx(1.0).epsilon(0.01));

  SUBCASE("double hump in stance") {
    const GrfHumps h = stance_grf_humps(log);
    REQUIRE(h.found);
    CHECK(h.first_time < h.valley_time);
    CHECK(h.valley_time < h.second_time);
    CHECK(h.dip() >= 0.05);
  }

  SUBCASE("stepping in place stays put") {
    const ReplayLog still = rollout_open_loop(kParams, fixture().solved.at(0).gait);
    CHECK(std::abs(still.mean_forward_velocity) <= 1e-3);
  }

  SUBCASE("deviation shrinks with knot refinement") {
    const GaitOptions coarse;
    double prev = log.max_body_deviation;
    for (int f : {2, 4}) {
      GaitOptions fine;
      fine.knots_single = 9 * f + 1;
      fine.knots_double = 5 * f + 1;
      const OptimizedGait refined = refine_gait(kParams, og, coarse, fine);
      const double dev = rollout_open_loop(kParams, refined.gait).max_body_deviation;
      CAPTURE(f);
      CHECK(dev < prev);
      prev = dev;
    }
  }

  SUBCASE("csv") {
    std::ostringstream out;
    write_replay_csv(log, out, {"replay"});
    const std::string text = out.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 203);
  }
}

TEST_CASE("reset draws the phase uniformly and starts on the reference") {
  WalkEnv env(fixture().lib);
  std::mt19937_64 rng(42);
  std::array<int, 10> bins{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    env.reset(0.4, rng);
    ++bins[static_cast<int>(env.phase() * 10)];
  }
  double chi2 = 0.0;
  for (int b : bins) chi2 += (b - n / 10.0) * (b - n / 10.0) / (n / 10.0);
  CHECK(chi2 < 27.88);  // 9 degrees of freedom, p = 0.001

  for (double speed : {0.0, 0.35, 0.8}) {
    const Observation o = env.reset(speed, rng);
    CHECK(o.size() == static_cast<std::size_t>(kObservationDim));
    CHECK(env.evaluate_reward(zeros()).total >= 0.9);
  }

  std::mt19937_64 a(7), b(7);
  CHECK(env.reset(0.6, a) == env.reset(0.6, b));
}

TEST_CASE("zero actions track the reference for a full cycle") {
  WalkEnv env(fixture().lib);
  for (double phase : {0.0, 0.25, 0.6}) {
    env.reset_at(0.4, phase);
    const int cycle = static_cast<int>(std::ceil(env.period() / env.config().control_period));
    for (int i = 0; i < cycle; ++i) {
      const StepResult r = env.step(zeros());
      CHECK_FALSE(r.fault);
      CHECK(r.reward >= 0.7);
      REQUIRE_FALSE(r.done);
    }
  }
}

TEST_CASE("episodes are deterministic") {
  SimConfig cfg;
  cfg.observation_noise = 0.01;
  const auto episode = [&] {
    WalkEnv env(fixture().lib, cfg);
    std::mt19937_64 rng(99);
    env.reset(0.7, rng);
    std::vector<StepRecord> rows;
    std::normal_distribution<double> N(0.0, 0.2);
    std::vector<double> obs;
    while (!env.done()) {
      Action a(kActionDim);
      for (double& v : a) v = N(rng);
      const StepResult r = env.step(a);
      rows.push_back(record(env, r, a));
      obs.insert(obs.end(), r.observation.begin(), r.observation.end());
    }
    std::ostringstream out;
    write_step_csv(rows, out);
    return std::make_pair(out.str(), obs);
  };
  const auto first = episode(), second = episode();
  CHECK(first.first == second.first);
  CHECK(first.second == second.second);
}

TEST_CASE("low reward ends the episode immediately") {
  SimConfig cfg;
  cfg.weights = {0.0, 0.0, 0.0, 0.0, 1.0};
  WalkEnv env(fixture().lib, cfg);
  env.reset_at(0.5, 0.1);
  const Action up(kActionDim, 1.0), down(kActionDim, -1.0);
  CHECK_FALSE(env.step(up).done);  // no previous action: difference term is 1
  const StepResult r = env.step(down);
  CHECK(r.reward < 0.3);
  CHECK(r.done);
  CHECK_THROWS_AS(env.step(up), std::logic_error);
}

TEST_CASE("episode cap and clock agreement") {
  SimConfig cfg;
  cfg.max_steps = 5;
  WalkEnv env(fixture().lib, cfg);
  env.reset_at(0.2, 0.3);
  double elapsed = 0.0;
  for (int i = 1; i <= 5; ++i) {
    const StepResult r = env.step(zeros());
    for (int j = 0; j < cfg.substeps; ++j) elapsed += cfg.substep();
    CHECK(env.time() == i / 33.0);
    CHECK(std::abs(elapsed - i / 33.0) < 1e-12);
    CHECK(r.done == (i == 5));
  }
  CHECK_THROWS_AS(WalkEnv(fixture().lib, SimConfig{0}), std::invalid_argument);
  WalkEnv other(fixture().lib);
  other.reset_at(0.2, 0.3);
  CHECK_THROWS_AS(other.step(Action(3, 0.0)), std::invalid_argument);
}

TEST_CASE("action delay shows up after the configured substeps") {
  for (int delay : {0, 6}) {
    SimConfig cfg;
    cfg.delay_substeps = delay;
    WalkEnv a(fixture().lib, cfg), b(fixture().lib, cfg);
    a.reset_at(0.5, 0.2);
    b.reset_at(0.5, 0.2);
    a.step(zeros());
    b.step(zeros());
    std::vector<AslipState> ta, tb;
    a.trace_substeps(&ta);
    b.trace_substeps(&tb);
    Action kick = zeros();
    kick[0] = 0.5;  // left setpoint rate
    a.step(zeros());
    b.step(kick);
    int first = -1;
    for (std::size_t i = 0; i < ta.size(); ++i)
      if (ta[i].left.d_dot != tb[i].left.d_dot) {
        first = static_cast<int>(i);
        break;
      }
    CAPTURE(delay);
    CHECK(first == delay);  // substeps before index `delay` still use the old action
  }
}

TEST_CASE("contact sequence alternates and stays unilateral") {
  WalkEnv env(fixture().lib);
  std::vector<AslipState> trace;
  env.trace_substeps(&trace);
  env.reset_at(0.9, 0.0);
  const Action a = zeros();
  for (int i = 0; i < 60 && !env.done(); ++i) env.step(a);
  const std::map<Phase, Phase> next{{Phase::SingleStanceLeft, Phase::DoubleStance},
                                    {Phase::SingleStanceRight, Phase::DoubleStance}};
  int transitions = 0;
  Phase last_single = Phase::SingleStanceLeft;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const Phase p = trace[i - 1].phase, q = trace[i].phase;
    CHECK(grf(kParams, trace[i]).left.z >= -1e-6);
    CHECK(grf(kParams, trace[i]).right.z >= -1e-6);
    if (p == q) continue;
    ++transitions;
    CHECK(p != q);
    if (p == Phase::DoubleStance) {
      CHECK(q != last_single);  // single stances alternate
      last_single = q;
    } else {
      CHECK(q == Phase::DoubleStance);
    }
  }
  CHECK(transitions >= 4);
}

TEST_CASE("foothold offsets move touchdowns by the offset") {
  WalkEnv env(fixture().lib);
  env.reset_at(0.6, 0.05);
  Action a = zeros();
  a[4] = 0.05 / env.config().foothold_offset_max;  // right foot 5 cm forward
  std::vector<Touchdown> seen;
  for (int i = 0; i < 30 && seen.empty(); ++i) {
    const StepResult r = env.step(a);
    seen = r.touchdowns;
  }
  REQUIRE(seen.size() == 1);
  CHECK(seen[0].side == Side::Right);
  CHECK(seen[0].error == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(seen[0].foothold.z == 0.0);
}
