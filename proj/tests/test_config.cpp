#include <doctest.h>

#include <string>

#include "aslip/config.hpp"

using namespace aslip;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_CASE("defaults parse from an empty object") {
  const ToolkitConfig cfg = parse_config("{}");
  CHECK(cfg.model.mass == 30.0);
  CHECK(cfg.ppo.sample_size == 5096);
  CHECK(cfg.sim.substeps == 60);
  CHECK(dump_config(cfg) == dump_config(ToolkitConfig{}));
}

TEST_CASE("the speed grid has 21 points on the decimal grid") {
  const std::vector<double> v = ToolkitConfig{}.library.speeds();
  REQUIRE(v.size() == 21);
  for (int i = 0; i <= 20; ++i) CHECK(v[i] == static_cast<double>(i) / 10.0);
}

TEST_CASE("values are read into nested sections") {
  const ToolkitConfig cfg = parse_config(R"({
    "model": {"stiffness": 2500},
    "gait": {"solver": {"max_outer": 12}, "bounds": {"setpoint": {"min": 0.6}}},
    "reward": {"weights": {"straight": 0.2, "foot_orient": 0.1}},
    "eval": {"script": [{"speed": 0.2, "seconds": 3}, {"speed": 0.8}]},
    "seed": 42, "output_dir": "runs"
  })");
  CHECK(cfg.model.stiffness == 2500.0);
  CHECK(cfg.gait.solver.max_outer == 12);
  CHECK(cfg.gait.bounds.setpoint.min == 0.6);
  CHECK(cfg.sim.weights.straight == 0.2);
  REQUIRE(cfg.eval.script.size() == 2);
  CHECK(cfg.eval.script[0].seconds == 3.0);
  CHECK(cfg.eval.script[1].seconds == 10.0);
  CHECK(cfg.seed == 42);
  CHECK(cfg.output_dir == "runs");
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK(contains(error_of(R"({"modle": {}})"), "'modle'"));
  CHECK(contains(error_of(R"({"gait": {"solver": {"tolerance": 1}}})"), "'gait.solver.tolerance'"));
  CHECK(contains(error_of(R"({"eval": {"script": [{"speed": 1, "secs": 2}]}})"), "'eval.script[0].secs'"));
}

TEST_CASE("wrong types and invalid values name the key") {
  CHECK(contains(error_of(R"({"model": {"mass": "heavy"}})"), "'model.mass': expected a number"));
  CHECK(contains(error_of(R"({"ppo": {"epochs": 2.5}})"), "'ppo.epochs': expected an integer"));
  CHECK(contains(error_of(R"({"seed": -1})"), "'seed'"));
  CHECK(contains(error_of(R"({"model": 3})"), "'model': expected an object"));
  CHECK(contains(error_of(R"({"library": {"speed_max": 2.5}})"), "'library'"));
  CHECK(contains(error_of(R"({"ppo": {"clip": 0}})"), "'ppo'"));
  CHECK(contains(error_of(R"({"reward": {"weights": {"straight": 0.5}}})"), "'reward.weights'"));
  CHECK(contains(error_of(R"({"eval": {"script": [{"speed": 2.5}]}})"), "'eval.script[0].speed'"));
}

TEST_CASE("syntax errors report the line") {
  const std::string e = error_of("{\n  \"seed\": 1,\n  \"model\": {\n    \"mass\" 30\n  }\n}");
  CHECK(contains(e, "line 4"));
  CHECK(contains(error_of("[1, 2]"), "must be a JSON object"));
}

TEST_CASE("dump round trips and the fingerprint tracks every field") {
  ToolkitConfig cfg;
  cfg.sim.servo_kp = 321.5;
  cfg.eval.script = {{0.1, 1.0}, {0.9, 2.0}};
  const ToolkitConfig back = parse_config(dump_config(cfg));
  CHECK(dump_config(back) == dump_config(cfg));
  CHECK(config_fingerprint(back) == config_fingerprint(cfg));
  CHECK(config_fingerprint(cfg).size() == 16);

  ToolkitConfig other = cfg;
  other.ppo.log_std = -1.9;
  CHECK(config_fingerprint(other) != config_fingerprint(cfg));
  other = cfg;
  other.seed = 2;
  CHECK(config_fingerprint(other) != config_fingerprint(cfg));
}

TEST_CASE("missing config file") {
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}
