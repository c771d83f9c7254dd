#include "aslip/reward.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace aslip {

namespace {

Vec3 yaw_frame(const Vec3& v, double heading) {
  const double c = std::cos(heading), s = std::sin(heading);
  return {c * v.x + s * v.y, -s * v.x + c * v.y, v.z};
}

}  // namespace

void RewardWeights::validate() const {
  for (double w : {com_vel, foot_pos, straight, foot_orient, action_diff})
    if (!(w >= 0.0)) throw std::invalid_argument("reward weights must be nonnegative");
  const double sum = com_vel + foot_pos + straight + foot_orient + action_diff;
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("reward weights must sum to 1, got " + std::to_string(sum));
}

double com_vel_term(const Vec3& v, const Vec3& v_ref, double heading, double scale) {
  return std::exp(-norm(yaw_frame(v, heading) - yaw_frame(v_ref, heading)) / scale);
}

double foot_pos_term(const std::array<Vec3, 2>& feet, const std::array<Vec3, 2>& feet_ref, double scale) {
  return std::exp(-(norm(feet[0] - feet_ref[0]) + norm(feet[1] - feet_ref[1])) / scale);
}

double straight_term(double lateral_pos, double scale) { return std::exp(-std::abs(lateral_pos) / scale); }

double foot_orient_term(const std::array<Eigen::Quaterniond, 2>& feet, double scale) {
  double sum = 0.0;
  for (const Eigen::Quaterniond& q : feet) {
    if (std::abs(q.norm() - 1.0) > 1e-9) throw std::invalid_argument("foot orientation must be a unit quaternion");
    sum += Eigen::Quaterniond::Identity().angularDistance(q);
  }
  return std::exp(-sum / scale);
}

double action_diff_term(const std::vector<double>& a, const std::optional<std::vector<double>>& a_prev,
                        double scale) {
  if (!a_prev) return 1.0;
  if (a_prev->size() != a.size())
    throw std::invalid_argument("action lengths differ: " + std::to_string(a.size()) + " vs " +
                                std::to_string(a_prev->size()));
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - (*a_prev)[i]) * (a[i] - (*a_prev)[i]);
  return std::exp(-std::sqrt(sq) / scale);
}

RewardBreakdown total_reward(RewardBreakdown t, const RewardWeights& w) {
  // Dividing by the weight sum evaluated in the same order makes a perfect step
  // score exactly 1 even though 0.3 + 0.3 + 0.1 + 0.2 + 0.1 rounds below it.
  const double weighted = w.com_vel * t.com_vel + w.foot_pos * t.foot_pos + w.straight * t.straight +
                          w.foot_orient * t.foot_orient + w.action_diff * t.action_diff;
  const double sum = w.com_vel * 1.0 + w.foot_pos * 1.0 + w.straight * 1.0 + w.foot_orient * 1.0 + w.action_diff * 1.0;
  t.total = weighted / sum;
  t.terminate = t.total < kTerminationReward;
  return t;
}

bool should_terminate(int step_count, double reward, int max_steps) {
  return reward < kTerminationReward || step_count >= max_steps;
}

}  // namespace aslip
