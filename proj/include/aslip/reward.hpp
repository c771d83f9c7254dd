#pragma once

#include <Eigen/Geometry>
#include <array>
#include <optional>
#include <vector>

#include "aslip/vec3.hpp"

namespace aslip {

struct RewardWeights {
  double com_vel = 0.3;
  double foot_pos = 0.3;
  double straight = 0.1;
  double foot_orient = 0.2;
  double action_diff = 0.1;

  /// Throws std::invalid_argument on a negative weight or a sum other than 1.
  void validate() const;
};

/// Divisors applied to each distance before exponentiation.
struct RewardScales {
  double com_vel = 1.0;      // m/s
  double foot_pos = 1.0;     // m
  double straight = 1.0;     // m
  double foot_orient = 1.0;  // rad
  double action_diff = 1.0;
};

struct RewardBreakdown {
  double com_vel = 1.0;
  double foot_pos = 1.0;
  double straight = 1.0;
  double foot_orient = 1.0;
  double action_diff = 1.0;
  double total = 1.0;
  bool terminate = false;
};

inline constexpr int kMaxEpisodeSteps = 400;
inline constexpr double kTerminationReward = 0.3;

/// Velocities are compared in the frame yawed by `heading` about +z.
double com_vel_term(const Vec3& v, const Vec3& v_ref, double heading, double scale = 1.0);

/// Arguments are foot positions relative to the body.
double foot_pos_term(const std::array<Vec3, 2>& feet, const std::array<Vec3, 2>& feet_ref, double scale = 1.0);

double straight_term(double lateral_pos, double scale = 1.0);

/// Angular distance of each foot from the flat, forward-facing orientation.
/// Throws std::invalid_argument for quaternions that are not unit length.
double foot_orient_term(const std::array<Eigen::Quaterniond, 2>& feet, double scale = 1.0);
/// Point feet carry no orientation.
inline double foot_orient_term_point_feet() { return 1.0; }

/// Returns 1 when there is no previous action. Throws on a length mismatch.
double action_diff_term(const std::vector<double>& a, const std::optional<std::vector<double>>& a_prev,
                        double scale = 1.0);

/// Fills `total` from the five term values already stored in `terms`.
RewardBreakdown total_reward(RewardBreakdown terms, const RewardWeights& weights = {});

/// True once the step reward drops below 0.3 or the episode reaches its cap.
bool should_terminate(int step_count, double reward, int max_steps = kMaxEpisodeSteps);

}  // namespace aslip
