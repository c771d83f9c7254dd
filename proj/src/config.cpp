#include "aslip/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace aslip {

using json = nlohmann::json;

namespace {

// Field list shared by the reader and the writer.
template <class V>
void visit(ToolkitConfig& c, V& v) {
  v.section("model", [&] {
    v("mass", c.model.mass);
    v("stiffness", c.model.stiffness);
    v("damping", c.model.damping);
    v("actuator_inertia", c.model.actuator_inertia);
    v("gravity", c.model.gravity);
  });
  v.section("gait", [&] {
    GaitOptions& g = c.gait;
    v("knots_single", g.knots_single);
    v("knots_double", g.knots_double);
    v.section("single_duration", [&] {
      v("min", g.single_duration.min);
      v("max", g.single_duration.max);
    });
    v.section("double_duration", [&] {
      v("min", g.double_duration.min);
      v("max", g.double_duration.max);
    });
    v("swing_clearance", g.swing_clearance);
    v("samples_per_cycle", g.samples_per_cycle);
    v.section("bounds", [&] {
      TranscriptionOptions& b = g.bounds;
      v.section("leg_length", [&] {
        v("min", b.leg_length.min);
        v("max", b.leg_length.max);
      });
      v.section("setpoint", [&] {
        v("min", b.setpoint.min);
        v("max", b.setpoint.max);
      });
      v("setpoint_rate_max", b.setpoint_rate_max);
      v("input_max", b.input_max);
      v("step_width_min", b.step_width_min);
      v("step_width_max", b.step_width_max);
      v("grf_min", b.grf_min);
      v("body_height_min", b.body_height_min);
    });
    v.section("solver", [&] {
      nlp::SolverOptions& s = g.solver;
      v("feasibility_tol", s.feasibility_tol);
      v("stationarity_tol", s.stationarity_tol);
      v("max_outer", s.max_outer);
      v("max_inner", s.max_inner);
      v("initial_penalty", s.initial_penalty);
      v("penalty_growth", s.penalty_growth);
      v("max_penalty", s.max_penalty);
      v("memory", s.memory);
    });
  });
  v.section("library", [&] {
    v("speed_min", c.library.speed_min);
    v("speed_max", c.library.speed_max);
    v("speed_step", c.library.speed_step);
  });
  v.section("sim", [&] {
    SimConfig& s = c.sim;
    v("substeps", s.substeps);
    v("control_period", s.control_period);
    v("delay_substeps", s.delay_substeps);
    v("max_steps", s.max_steps);
    v("rate_delta_max", s.rate_delta_max);
    v("foothold_offset_max", s.foothold_offset_max);
    v("servo_kp", s.servo_kp);
    v("servo_kd", s.servo_kd);
    v("input_max", s.input_max);
    v("observation_noise", s.observation_noise);
    v("grf_tolerance", s.grf_tolerance);
  });
  v.section("reward", [&] {
    v.section("weights", [&] {
      RewardWeights& w = c.sim.weights;
      v("com_vel", w.com_vel);
      v("foot_pos", w.foot_pos);
      v("straight", w.straight);
      v("foot_orient", w.foot_orient);
      v("action_diff", w.action_diff);
    });
    v.section("scales", [&] {
      RewardScales& s = c.sim.scales;
      v("com_vel", s.com_vel);
      v("foot_pos", s.foot_pos);
      v("straight", s.straight);
      v("foot_orient", s.foot_orient);
      v("action_diff", s.action_diff);
    });
  });
  v.section("ppo", [&] {
    rl::PpoConfig& p = c.ppo;
    v("learning_rate", p.learning_rate);
    v("adam_epsilon", p.adam_epsilon);
    v("gamma", p.gamma);
    v("clip", p.clip);
    v("epochs", p.epochs);
    v("minibatch", p.minibatch);
    v("sample_size", p.sample_size);
    v("gae_lambda", p.gae_lambda);
    v("hidden_width", p.hidden_width);
    v("hidden_layers", p.hidden_layers);
    v("log_std", p.log_std);
  });
  v.section("train", [&] {
    v("total_steps", c.train.total_steps);
    v("workers", c.train.workers);
    v("speed_min", c.train.speed_min);
    v("speed_max", c.train.speed_max);
    v("checkpoint_every", c.train.checkpoint_every);
  });
  v.section("eval", [&] {
    v("script", c.eval.script);
    v("min_step_reward", c.eval.min_step_reward);
    v("max_speed_error", c.eval.max_speed_error);
    v("touchdown_target", c.eval.touchdown_target);
  });
  v("seed", c.seed);
  v("output_dir", c.output_dir);
}

class Reader {
 public:
  explicit Reader(const json& root) { stack_.push_back({&root, "", {}}); }

  template <class Fn>
  void section(const char* key, Fn&& fn) {
    const json* j = find(key);
    if (!j) return;
    if (!j->is_object()) fail(path(key), "expected an object");
    stack_.push_back({j, path(key), {}});
    fn();
    finish();
    stack_.pop_back();
  }

  void operator()(const char* key, double& out) {
    if (const json* j = find(key)) {
      if (!j->is_number()) fail(path(key), "expected a number");
      out = j->get<double>();
      if (!std::isfinite(out)) fail(path(key), "must be finite");
    }
  }
  void operator()(const char* key, int& out) { out = static_cast<int>(integer(key, out, -2147483648LL, 2147483647LL)); }
  void operator()(const char* key, long long& out) { out = integer(key, out, -(1LL << 62), 1LL << 62); }
  void operator()(const char* key, std::uint64_t& out) {
    if (const json* j = find(key)) {
      if (!j->is_number_unsigned()) fail(path(key), "expected a non-negative integer");
      out = j->get<std::uint64_t>();
    }
  }
  void operator()(const char* key, std::string& out) {
    if (const json* j = find(key)) {
      if (!j->is_string()) fail(path(key), "expected a string");
      out = j->get<std::string>();
    }
  }
  void operator()(const char* key, std::vector<EvalSegment>& out) {
    const json* j = find(key);
    if (!j) return;
    if (!j->is_array() || j->empty()) fail(path(key), "expected a non-empty array of {speed, seconds}");
    out.clear();
    for (std::size_t i = 0; i < j->size(); ++i) {
      const std::string p = path(key) + "[" + std::to_string(i) + "]";
      const json& e = (*j)[i];
      if (!e.is_object()) fail(p, "expected an object");
      EvalSegment s;
      for (const auto& [k, val] : e.items()) {
        if (k != "speed" && k != "seconds") fail(p + "." + k, "unknown key");
        if (!val.is_number()) fail(p + "." + k, "expected a number");
        (k == "speed" ? s.speed : s.seconds) = val.get<double>();
      }
      out.push_back(s);
    }
  }

  void finish() {
    const Frame& f = stack_.back();
    for (const auto& [k, val] : f.node->items())
      if (!f.seen.count(k)) fail(path(k.c_str()), "unknown key");
  }

 private:
  struct Frame {
    const json* node;
    std::string path;
    std::set<std::string> seen;
  };

  const json* find(const char* key) {
    Frame& f = stack_.back();
    f.seen.insert(key);
    auto it = f.node->find(key);
    return it == f.node->end() ? nullptr : &*it;
  }

  long long integer(const char* key, long long current, long long lo, long long hi) {
    const json* j = find(key);
    if (!j) return current;
    if (!j->is_number_integer()) fail(path(key), "expected an integer");
    const long long v = j->get<long long>();
    if (v < lo || v > hi) fail(path(key), "out of range");
    return v;
  }

  std::string path(const char* key) const {
    const std::string& p = stack_.back().path;
    return p.empty() ? key : p + "." + key;
  }

  [[noreturn]] static void fail(const std::string& key, const std::string& msg) {
    throw ConfigError("config key '" + key + "': " + msg);
  }

  std::vector<Frame> stack_;
};

class Writer {
 public:
  json root = json::object();

  template <class Fn>
  void section(const char* key, Fn&& fn) {
    json* parent = current_;
    current_ = &(*parent)[key];
    *current_ = json::object();
    fn();
    current_ = parent;
  }
  template <class T>
  void operator()(const char* key, const T& value) {
    (*current_)[key] = value;
  }
  void operator()(const char* key, const std::vector<EvalSegment>& script) {
    json a = json::array();
    for (const EvalSegment& s : script) a.push_back({{"speed", s.speed}, {"seconds", s.seconds}});
    (*current_)[key] = a;
  }

 private:
  json* current_ = &root;
};

}  // namespace

std::vector<double> LibrarySettings::speeds() const {
  std::vector<double> out;
  const long long n = std::llround((speed_max - speed_min) / speed_step);
  for (long long i = 0; i <= n; ++i) {
    // Round to the step's decimal grid so 0.1 steps give 0.3, not 0.30000000000000004.
    const double v = speed_min + static_cast<double>(i) * speed_step;
    out.push_back(std::round(v * 1e9) / 1e9);
  }
  return out;
}

void ToolkitConfig::validate() const {
  const auto bad = [](const std::string& key, const std::string& msg) {
    throw ConfigError("config key '" + key + "': " + msg);
  };
  const auto wrap = [&](const char* key, auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      bad(key, e.what());
    }
  };
  wrap("model", [&] { model.validate(); });
  wrap("gait", [&] { gait.schedule().validate(); });
  if (gait.samples_per_cycle < 4) bad("gait.samples_per_cycle", "must be at least 4");
  if (!(gait.swing_clearance > 0.0)) bad("gait.swing_clearance", "must be positive");
  if (!(library.speed_step > 0.0)) bad("library.speed_step", "must be positive");
  if (!(library.speed_min >= 0.0 && library.speed_max <= 2.0 && library.speed_min <= library.speed_max))
    bad("library", "speeds must satisfy 0 <= speed_min <= speed_max <= 2");
  const double n = (library.speed_max - library.speed_min) / library.speed_step;
  if (std::abs(n - std::round(n)) > 1e-9) bad("library.speed_step", "must divide the speed range");
  wrap("reward.weights", [&] { sim.weights.validate(); });
  wrap("sim", [&] { sim.validate(); });
  wrap("ppo", [&] { ppo.validate(); });
  if (train.total_steps < 1) bad("train.total_steps", "must be positive");
  if (train.workers < 1) bad("train.workers", "must be positive");
  if (train.checkpoint_every < 0) bad("train.checkpoint_every", "must be non-negative");
  if (!(train.speed_min >= library.speed_min && train.speed_max <= library.speed_max &&
        train.speed_min <= train.speed_max))
    bad("train", "speed range must lie inside the library range");
  for (std::size_t i = 0; i < eval.script.size(); ++i) {
    const EvalSegment& s = eval.script[i];
    const std::string key = "eval.script[" + std::to_string(i) + "]";
    if (!(s.speed >= 0.0 && s.speed <= 2.0)) bad(key + ".speed", "must lie in [0, 2]");
    if (!(s.seconds > 0.0)) bad(key + ".seconds", "must be positive");
  }
  if (output_dir.empty()) bad("output_dir", "must not be empty");
}

ToolkitConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    int line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("config parse error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                      ": " + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  ToolkitConfig cfg;
  Reader r(root);
  visit(cfg, r);
  r.finish();
  cfg.validate();
  return cfg;
}

ToolkitConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string dump_config(const ToolkitConfig& cfg) {
  Writer w;
  visit(const_cast<ToolkitConfig&>(cfg), w);
  return w.root.dump(2);
}

std::string config_fingerprint(const ToolkitConfig& cfg) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : dump_config(cfg)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace aslip
