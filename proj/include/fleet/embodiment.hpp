#pragma once

#include "fleet/core.hpp"

#include <array>
#include <string>
#include <vector>

namespace fleet {

// Inertial description of one rigid body, expressed in its own frame.
struct BodyProperties {
  double mass = 0.0;
  Eigen::Vector3d com = Eigen::Vector3d::Zero();
  // Upper triangle of the inertia tensor: Ixx, Iyy, Izz, Ixy, Ixz, Iyz.
  Eigen::Matrix<double, 6, 1> inertia = Eigen::Matrix<double, 6, 1>::Zero();
};

// Static description of one robot model. Loaded from the registry; never
// mutated at runtime.
struct EmbodimentSpec {
  int id = -1;
  std::string name;
  int n_dofs = 0;

  // joint_map[k] = unified slot claimed by native joint k.
  std::vector<int> joint_map;

  // Per native joint, length n_dofs each.
  Vector default_pose;
  Vector stiffness;
  Vector damping;

  // Native joint index subsets used by the deviation penalties.
  std::vector<int> upper_joints;
  std::vector<int> hip_joints;

  // Swing apex targets, metres, order [left, right].
  std::array<double, kFeetCount> swing_height_targets{0.0, 0.0};
  double nominal_base_height = 0.0;

  // Order: torso, left foot, right foot.
  std::array<BodyProperties, kBodyCount> bodies;

  // Maps native joint targets to base accelerations in the surrogate
  // dynamics; rows are (vx, vy, yaw rate, height rate, pitch rate).
  Eigen::Matrix<double, 5, Eigen::Dynamic> actuation_matrix;

  // Throws ConfigError naming this embodiment and the offending field.
  void validate() const;

  // Native index claiming `slot`, or -1 when the slot is unclaimed.
  int native_index_of_slot(int slot) const {
    for (int k = 0; k < n_dofs; ++k) {
      if (joint_map[k] == slot) return k;
    }
    return -1;
  }
};

// Forward map P (native k -> slot) together with its selector S
// (slot -> native k). recover(embed(x)) == x holds bit for bit because both
// directions are pure index moves.
struct SlotPermutation {
  // slot_of_native[k] = slot claimed by native joint k.
  std::vector<int> slot_of_native;
  // native_of_slot[s] = native joint claiming slot s, or -1.
  std::array<int, kUnifiedDim> native_of_slot;

  int n_dofs() const { return static_cast<int>(slot_of_native.size()); }

  Vector embed(const Vector& native) const {
    if (native.size() != n_dofs()) {
      throw ConfigError("embed: expected " + std::to_string(n_dofs()) + " native values, got " +
                        std::to_string(native.size()));
    }
    Vector unified = Vector::Zero(kUnifiedDim);
    for (int k = 0; k < n_dofs(); ++k) unified[slot_of_native[k]] = native[k];
    return unified;
  }

  Vector recover(const Vector& unified) const {
    if (unified.size() != kUnifiedDim) {
      throw ConfigError("recover: expected " + std::to_string(kUnifiedDim) + " values, got " +
                        std::to_string(unified.size()));
    }
    Vector native(n_dofs());
    for (int k = 0; k < n_dofs(); ++k) native[k] = unified[slot_of_native[k]];
    return native;
  }

  // embed(recover(x)): same joint content with unclaimed slots zeroed.
  Vector mask(const Vector& unified) const {
    Vector out = Vector::Zero(kUnifiedDim);
    for (int k = 0; k < n_dofs(); ++k) {
      const int s = slot_of_native[k];
      out[s] = unified[s];
    }
    return out;
  }
};

inline SlotPermutation build_permutation(const std::vector<int>& joint_map) {
  SlotPermutation p;
  p.slot_of_native = joint_map;
  p.native_of_slot.fill(-1);
  for (int k = 0; k < static_cast<int>(joint_map.size()); ++k) {
    const int s = joint_map[k];
    if (s < 0 || s >= kUnifiedDim) {
      throw ConfigError("joint_map entry " + std::to_string(k) + " = " + std::to_string(s) +
                        " outside [0, " + std::to_string(kUnifiedDim - 1) + "]");
    }
    if (p.native_of_slot[s] != -1) {
      throw ConfigError("joint_map claims slot " + std::to_string(s) + " twice (native joints " +
                        std::to_string(p.native_of_slot[s]) + " and " + std::to_string(k) + ")");
    }
    p.native_of_slot[s] = k;
  }
  return p;
}

inline Vector embed_action(const Vector& native, const EmbodimentSpec& spec) {
  return build_permutation(spec.joint_map).embed(native);
}

inline Vector recover_action(const Vector& unified, const EmbodimentSpec& spec) {
  return build_permutation(spec.joint_map).recover(unified);
}

// Raw (unnormalized) inertial feature block; normalization constants live in
// the registry so the same statistics apply to every embodiment.
inline Vector raw_embodiment_features(const EmbodimentSpec& spec) {
  Vector out(kEmbodimentObsDim);
  int at = 0;
  for (const BodyProperties& b : spec.bodies) {
    out[at++] = b.mass;
    out.segment<3>(at) = b.com;
    at += 3;
    out.segment<6>(at) = b.inertia;
    at += 6;
  }
  return out;
}

inline void EmbodimentSpec::validate() const {
  const std::string who = "embodiment '" + name + "': ";
  auto fail = [&](const std::string& msg) { throw ConfigError(who + msg); };

  if (id < 0) fail("id must be non-negative");
  if (name.empty()) fail("name must be non-empty");
  if (n_dofs < 1 || n_dofs > kUnifiedDim) {
    fail("n_dofs = " + std::to_string(n_dofs) + " outside [1, " + std::to_string(kUnifiedDim) + "]");
  }
  if (static_cast<int>(joint_map.size()) != n_dofs) fail("joint_map length != n_dofs");
  try {
    build_permutation(joint_map);
  } catch (const ConfigError& e) {
    fail(e.what());
  }
  auto check_len = [&](const Vector& v, const char* field) {
    if (v.size() != n_dofs) fail(std::string(field) + " length != n_dofs");
  };
  check_len(default_pose, "default_pose");
  check_len(stiffness, "stiffness");
  check_len(damping, "damping");
  if ((stiffness.array() <= 0.0).any()) fail("stiffness entries must be positive");
  if ((damping.array() <= 0.0).any()) fail("damping entries must be positive");
  for (int k : upper_joints) {
    if (k < 0 || k >= n_dofs) fail("upper_joints index " + std::to_string(k) + " out of range");
  }
  for (int k : hip_joints) {
    if (k < 0 || k >= n_dofs) fail("hip_joints index " + std::to_string(k) + " out of range");
  }
  for (double h : swing_height_targets) {
    if (!(h > 0.0)) fail("swing_height_targets must be positive");
  }
  if (!(nominal_base_height > 0.0)) fail("nominal_base_height must be positive");
  for (int b = 0; b < kBodyCount; ++b) {
    if (!(bodies[b].mass > 0.0)) fail("body " + std::to_string(b) + " mass must be positive");
    for (int i = 0; i < 3; ++i) {
      if (!(bodies[b].inertia[i] > 0.0)) fail("body " + std::to_string(b) + " diagonal inertia must be positive");
    }
  }
  if (actuation_matrix.cols() != n_dofs) fail("actuation_matrix must have n_dofs columns");
  if (!actuation_matrix.allFinite()) fail("actuation_matrix has non-finite entries");
}

}  // namespace fleet
