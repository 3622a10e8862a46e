#pragma once

#include "fleet/commands.hpp"
#include "fleet/core.hpp"
#include "fleet/gait.hpp"

#include <array>

namespace fleet {

struct FootState {
  Eigen::Vector2d velocity_xy = Eigen::Vector2d::Zero();
  Eigen::Vector2d force_xy = Eigen::Vector2d::Zero();
  double force_z = 0.0;
  double height = 0.0;   // clearance above ground, metres
  bool in_contact = false;
};

// Full simulation state of one robot instance. Joint quantities are native
// (length n_dofs); stored actions are unified 32-vectors with unclaimed slots
// masked to zero.
struct WorldState {
  int spec_id = -1;

  // Base pose (world frame position/heading, plus posture).
  double pos_x = 0.0;
  double pos_y = 0.0;
  double yaw = 0.0;
  double height = 0.0;
  double pitch = 0.0;
  double roll = 0.0;

  // Base velocities; linear in the base frame, angular about body axes.
  double vx = 0.0;
  double vy = 0.0;
  double yaw_rate = 0.0;
  double height_rate = 0.0;
  double pitch_rate = 0.0;
  double roll_rate = 0.0;

  Vector q;    // joint positions
  Vector qd;   // joint velocities
  Vector tau;  // last applied joint torques
  Vector qdd;  // last joint accelerations

  std::array<FootState, kFeetCount> feet;  // order [left, right]

  // Unified actions: the one applied at the last step and the two before it.
  Vector action;
  Vector action_prev;
  Vector action_prev2;

  Eigen::Vector3d gravity_proj = Eigen::Vector3d(0, 0, -1);
  double friction = 1.0;

  GaitState gait;
  CommandVector command;
  int step_count = 0;
};

}  // namespace fleet
