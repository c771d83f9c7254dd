#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "aslip/library.hpp"
#include "aslip/ppo.hpp"
#include "aslip/simenv.hpp"

namespace aslip {

inline constexpr int kOutputFormatVersion = 1;

struct LibrarySettings {
  double speed_min = 0.0;
  double speed_max = 2.0;
  double speed_step = 0.1;

  /// Grid points from speed_min to speed_max inclusive.
  std::vector<double> speeds() const;
};

struct TrainSettings {
  long long total_steps = 3'000'000;
  int workers = 4;
  double speed_min = 0.0;  // commanded speed drawn per episode
  double speed_max = 1.0;
  int checkpoint_every = 50;  // updates; 0 keeps only the final checkpoint
};

using EvalSegment = rl::SpeedSegment;

struct EvalSettings {
  std::vector<EvalSegment> script{EvalSegment{}};
  double min_step_reward = 0.6;
  double max_speed_error = 0.1;
  double touchdown_target = 0.10;  // soft: reported as pass or warn
};

/// Everything a run depends on. One file drives every command.
struct ToolkitConfig {
  ModelParams model;
  GaitOptions gait;
  LibrarySettings library;
  SimConfig sim;
  rl::PpoConfig ppo;
  TrainSettings train;
  EvalSettings eval;
  std::uint64_t seed = 1;
  std::string output_dir = ".";

  void validate() const;
};

/// Bad config text or content. `what()` names the line or the key path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing sections and keys keep their defaults; unknown keys and wrong types
/// are rejected.
ToolkitConfig parse_config(const std::string& text);
ToolkitConfig load_config(const std::string& path);

/// Canonical JSON of every field (sorted keys).
std::string dump_config(const ToolkitConfig& cfg);
/// Hex FNV-1a of dump_config.
std::string config_fingerprint(const ToolkitConfig& cfg);

}  // namespace aslip
