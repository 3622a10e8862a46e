#pragma once

#include "fleet/embodiment.hpp"
#include "fleet/world_state.hpp"

#include <array>
#include <string>

namespace fleet {

// Canonical reward term order. Group membership: terms [0, 2) are task,
// [2, 7) are behavior, [7, 17) are regularization. Summation always follows
// this order so totals are bit-reproducible.
enum class RewardTerm {
  kLinVelTracking = 0,
  kAngVelTracking,
  kBaseHeight,
  kBodyPitch,
  kFootSwing,
  kContactVelocity,
  kContactForce,
  kRollPitchAngVel,
  kVerticalSpeed,
  kFootSlip,
  kActionRate,
  kActionSmoothness,
  kJointTorque,
  kJointAcceleration,
  kUpperJointDeviation,
  kHipJointDeviation,
  kBaseOrientation,
  kCount,
};

inline constexpr int kRewardTermCount = static_cast<int>(RewardTerm::kCount);
inline constexpr int kTaskTermEnd = 2;
inline constexpr int kBehaviorTermEnd = 7;

inline const char* reward_term_name(int i) {
  static const char* names[kRewardTermCount] = {
      "lin_vel_tracking",  "ang_vel_tracking", "base_height",        "body_pitch",
      "foot_swing",        "contact_velocity", "contact_force",      "roll_pitch_ang_vel",
      "vertical_speed",    "foot_slip",        "action_rate",        "action_smoothness",
      "joint_torque",      "joint_acceleration", "upper_joint_deviation", "hip_joint_deviation",
      "base_orientation",
  };
  return names[i];
}

inline double reward_term_coefficient(int i) {
  static constexpr double coeffs[kRewardTermCount] = {
      2.0, 2.5, -60.0, -1.0, -30.0, -1.0, -1.0,
      -0.1, -2.0, -0.1, -2e-3, -2e-3, -1e-5, -5e-8, -5.0, -0.4, -5.0,
  };
  return coeffs[i];
}

// Group weights applied to the task / behavior / regularization sums.
struct RewardWeights {
  double task = 1.0;
  double behavior = 1.0;
  double regularization = 1.0;
};

struct RewardBreakdown {
  // Weighted terms (coefficient already applied), canonical order.
  std::array<double, kRewardTermCount> terms{};
  double task = 0.0;
  double behavior = 0.0;
  double regularization = 0.0;
  double total = 0.0;
};

// Computes every term from the post-step state. The gait phases are the ones
// the step was driven by (pre-advance), passed explicitly.
inline RewardBreakdown compute_reward(const WorldState& s, const CommandVector& cmd,
                                      const GaitState& gait, const EmbodimentSpec& spec,
                                      const RewardWeights& w) {
  RewardBreakdown out;

  // Unweighted term values, canonical order.
  std::array<double, kRewardTermCount> raw{};

  const double ev = square(cmd.vx - s.vx) + square(cmd.vy - s.vy);
  raw[0] = tracking_kernel(ev, 0.25);
  raw[1] = tracking_kernel(square(cmd.yaw_rate - s.yaw_rate), 0.25);

  const double h_target = spec.nominal_base_height + cmd.height_offset;
  raw[2] = square(h_target - s.height);
  raw[3] = square(cmd.pitch - s.pitch);

  const double contact[kFeetCount] = {contact_schedule(gait.phi1), contact_schedule(gait.phi2)};
  double swing_pos = 0.0, contact_vel = 0.0, contact_force = 0.0, slip = 0.0;
  for (int j = 0; j < kFeetCount; ++j) {
    const FootState& f = s.feet[j];
    const double c = contact[j];
    swing_pos += (1.0 - c) * square(spec.swing_height_targets[j] - f.height);
    contact_vel += c * (1.0 - tracking_kernel(f.velocity_xy.squaredNorm(), 5.0));
    contact_force += (1.0 - c) * (1.0 - tracking_kernel(f.force_xy.squaredNorm(), 50.0));
    slip += tracking_kernel(f.velocity_xy.squaredNorm(), 1.0);
  }
  raw[4] = swing_pos;
  raw[5] = contact_vel;
  raw[6] = contact_force;

  raw[7] = square(s.roll_rate) + square(s.pitch_rate);
  raw[8] = square(s.height_rate);
  raw[9] = 1.0 - slip;
  raw[10] = (s.action - s.action_prev).squaredNorm();
  raw[11] = (s.action_prev2 - 2.0 * s.action_prev + s.action).squaredNorm();
  raw[12] = s.tau.squaredNorm();
  raw[13] = s.qdd.squaredNorm();

  double upper_dev = 0.0;
  for (int k : spec.upper_joints) upper_dev += square(spec.default_pose[k] - s.q[k]);
  raw[14] = upper_dev;
  double hip_dev = 0.0;
  for (int k : spec.hip_joints) hip_dev += square(spec.default_pose[k] - s.q[k]);
  raw[15] = hip_dev;

  raw[16] = s.gravity_proj.head<2>().squaredNorm();

  auto& t = out.terms;
  for (int i = 0; i < kRewardTermCount; ++i) t[i] = reward_term_coefficient(i) * raw[i];

  for (int i = 0; i < kTaskTermEnd; ++i) out.task += t[i];
  for (int i = kTaskTermEnd; i < kBehaviorTermEnd; ++i) out.behavior += t[i];
  for (int i = kBehaviorTermEnd; i < kRewardTermCount; ++i) out.regularization += t[i];
  out.total = w.task * out.task + w.behavior * out.behavior + w.regularization * out.regularization;
  return out;
}

}  // namespace fleet
