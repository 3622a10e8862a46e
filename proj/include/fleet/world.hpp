#pragma once

#include "fleet/registry.hpp"
#include "fleet/reward.hpp"
#include "fleet/world_state.hpp"

#include <deque>
#include <optional>
#include <random>

namespace fleet {

// Tunables of the surrogate dynamics and its training schedule. Missing keys
// keep these defaults; unknown keys are rejected.
struct WorldConfig {
  double dt = 0.02;
  int horizon = 500;
  double drag = 0.5;
  double noise_sigma = 0.01;
  double fall_height_fraction = 0.4;
  double fall_pitch = 1.0;
  // Steps between command resamples; <= 0 disables resampling.
  int resample_interval = 150;
  double phase_offset = 0.5;
  // Foot kinematics shaping.
  double lift_gain = 0.35;
  double contact_force_scale = 10.0;
  double tangential_force_scale = 5.0;
  double slip_gain = 0.2;
  Range friction_range{0.5, 1.25};
  RewardWeights reward_weights;
  // Curriculum advance rule: widen ranges by `increment` when the windowed
  // mean of the summed task tracking errors drops below `threshold`.
  int curriculum_window = 50;
  double curriculum_threshold = 0.3;
  double curriculum_increment = 0.05;
  // When false the critic's inertial feature block is zeroed and the
  // estimation head stops training (ablation switch).
  bool embodiment_observation = true;
  CommandTable commands;

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("world.dt must be positive");
    if (horizon < 1) throw ConfigError("world.horizon must be >= 1");
    if (drag < 0.0) throw ConfigError("world.drag must be non-negative");
    if (noise_sigma < 0.0) throw ConfigError("world.noise_sigma must be non-negative");
    if (!(fall_height_fraction > 0.0 && fall_height_fraction < 1.0)) {
      throw ConfigError("world.fall_height_fraction must be in (0, 1)");
    }
    if (!(fall_pitch > 0.0)) throw ConfigError("world.fall_pitch must be positive");
    if (curriculum_window < 1) throw ConfigError("world.curriculum.window must be >= 1");
    if (curriculum_increment <= 0.0) throw ConfigError("world.curriculum.increment must be positive");
  }
};

inline WorldConfig load_world_config(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  const std::string where = std::filesystem::path(path).filename().string();
  detail::require_keys(root,
                       {"schema_version", "dt", "horizon", "drag", "noise_sigma",
                        "fall_height_fraction", "fall_pitch", "resample_interval", "phase_offset",
                        "lift_gain", "contact_force_scale", "tangential_force_scale", "slip_gain",
                        "friction_range", "reward_weights", "curriculum", "embodiment_observation"},
                       where);
  WorldConfig cfg;
  auto get = [&](const char* key, auto& field) {
    if (YAML::Node n = root[key]) field = n.as<std::decay_t<decltype(field)>>();
  };
  if (YAML::Node n = root["schema_version"]) {
    if (n.as<int>() != kRegistrySchemaVersion) throw ConfigError(where + ": unsupported schema_version");
  }
  get("dt", cfg.dt);
  get("horizon", cfg.horizon);
  get("drag", cfg.drag);
  get("noise_sigma", cfg.noise_sigma);
  get("fall_height_fraction", cfg.fall_height_fraction);
  get("fall_pitch", cfg.fall_pitch);
  get("resample_interval", cfg.resample_interval);
  get("phase_offset", cfg.phase_offset);
  get("lift_gain", cfg.lift_gain);
  get("contact_force_scale", cfg.contact_force_scale);
  get("tangential_force_scale", cfg.tangential_force_scale);
  get("slip_gain", cfg.slip_gain);
  get("embodiment_observation", cfg.embodiment_observation);
  if (YAML::Node n = root["friction_range"]) {
    const Vector r = detail::parse_vector(n, where + ".friction_range");
    if (r.size() != 2) throw ConfigError(where + ".friction_range: expected [lo, hi]");
    cfg.friction_range = {r[0], r[1]};
  }
  if (YAML::Node n = root["reward_weights"]) {
    detail::require_keys(n, {"task", "behavior", "regularization"}, where + ".reward_weights");
    if (YAML::Node v = n["task"]) cfg.reward_weights.task = v.as<double>();
    if (YAML::Node v = n["behavior"]) cfg.reward_weights.behavior = v.as<double>();
    if (YAML::Node v = n["regularization"]) cfg.reward_weights.regularization = v.as<double>();
  }
  if (YAML::Node n = root["curriculum"]) {
    detail::require_keys(n, {"window", "threshold", "increment"}, where + ".curriculum");
    if (YAML::Node v = n["window"]) cfg.curriculum_window = v.as<int>();
    if (YAML::Node v = n["threshold"]) cfg.curriculum_threshold = v.as<double>();
    if (YAML::Node v = n["increment"]) cfg.curriculum_increment = v.as<double>();
  }
  cfg.validate();
  return cfg;
}

struct ObservationBundle {
  Vector actor;
  Vector critic;
};

struct StepResult {
  RewardBreakdown reward;
  bool done = false;
  bool fell = false;
  // |measured - commanded| per tracked dimension, using the command that was
  // active during the step (before any resample).
  std::array<double, kTrackedCommandDims> tracking_abs_error{};
};

// One simulated robot. Dynamics are a deliberately simple stand-in for a
// physics engine: joints follow PD targets under unit inertia, the base
// follows a linear actuation model with drag and Gaussian acceleration noise,
// and foot contact states are driven kinematically by the gait clock.
class WorldInstance {
 public:
  WorldInstance(const EmbodimentSpec& spec, const WorldConfig& cfg,
                const CurriculumState& curriculum, const Vector& embodiment_obs,
                std::uint64_t seed, std::optional<CommandVector> fixed_command = std::nullopt)
      : spec_(&spec),
        cfg_(&cfg),
        curriculum_(&curriculum),
        oea_(embodiment_obs),
        perm_(build_permutation(spec.joint_map)),
        rng_(seed),
        fixed_command_(std::move(fixed_command)) {
    left_knee_ = perm_.native_of_slot[7];
    right_knee_ = perm_.native_of_slot[6];
    if (left_knee_ < 0 || right_knee_ < 0) {
      throw ConfigError("embodiment '" + spec.name + "' must claim both knee slots (6, 7)");
    }
    reset();
  }

  const WorldState& state() const { return state_; }
  WorldState& mutable_state() { return state_; }
  const EmbodimentSpec& spec() const { return *spec_; }

  void reset() {
    state_ = WorldState{};
    state_.spec_id = spec_->id;
    state_.q = spec_->default_pose;
    state_.qd = Vector::Zero(spec_->n_dofs);
    state_.tau = Vector::Zero(spec_->n_dofs);
    state_.qdd = Vector::Zero(spec_->n_dofs);
    state_.height = spec_->nominal_base_height;
    const Vector pose_unified = perm_.embed(spec_->default_pose);
    state_.action = pose_unified;
    state_.action_prev = pose_unified;
    state_.action_prev2 = pose_unified;
    std::uniform_real_distribution<double> fr(cfg_->friction_range.lo, cfg_->friction_range.hi);
    state_.friction = fr(rng_);
    state_.command = next_command();
    state_.gait = make_gait(cfg_->phase_offset, state_.command.gait_frequency);
    update_feet(contact_schedule(state_.gait.phi1), contact_schedule(state_.gait.phi2));
    history_.assign(kProprioFrames - 1, Vector::Zero(kProprioFrameDim));
  }

  StepResult step(const Vector& action) {
    if (action.size() != kUnifiedDim || !action.allFinite()) {
      throw NumericsError("non-finite or wrongly sized action for embodiment '" + spec_->name +
                          "' at step " + std::to_string(state_.step_count));
    }
    const Vector frame_before = proprio_frame();
    const GaitState gait_before = state_.gait;
    const CommandVector cmd = state_.command;

    // Joint PD under unit inertia, semi-implicit Euler.
    const Vector native = perm_.recover(action);
    state_.tau = spec_->stiffness.cwiseProduct(native - state_.q) -
                 spec_->damping.cwiseProduct(state_.qd);
    state_.qdd = state_.tau;
    state_.qd += state_.tau * cfg_->dt;
    state_.q += state_.qd * cfg_->dt;

    // Base: linear actuation response plus drag and acceleration noise.
    Eigen::Matrix<double, 5, 1> w;
    w << state_.vx, state_.vy, state_.yaw_rate, state_.height_rate, state_.pitch_rate;
    Eigen::Matrix<double, 5, 1> wdot = spec_->actuation_matrix * native - cfg_->drag * w;
    for (int i = 0; i < 5; ++i) wdot[i] += cfg_->noise_sigma * normal_(rng_);
    w += wdot * cfg_->dt;
    state_.vx = w[0];
    state_.vy = w[1];
    state_.yaw_rate = w[2];
    state_.height_rate = w[3];
    state_.pitch_rate = w[4];
    state_.roll_rate += (-cfg_->drag * state_.roll_rate + cfg_->noise_sigma * normal_(rng_)) * cfg_->dt;

    state_.yaw += state_.yaw_rate * cfg_->dt;
    state_.pos_x += (std::cos(state_.yaw) * state_.vx - std::sin(state_.yaw) * state_.vy) * cfg_->dt;
    state_.pos_y += (std::sin(state_.yaw) * state_.vx + std::cos(state_.yaw) * state_.vy) * cfg_->dt;
    state_.height += state_.height_rate * cfg_->dt;
    state_.pitch += state_.pitch_rate * cfg_->dt;
    state_.roll += state_.roll_rate * cfg_->dt;

    // Gravity in the base frame for ZYX Euler angles; unit norm by
    // construction.
    state_.gravity_proj = Eigen::Vector3d(
        std::sin(state_.pitch), -std::cos(state_.pitch) * std::sin(state_.roll),
        -std::cos(state_.pitch) * std::cos(state_.roll));

    update_feet(contact_schedule(gait_before.phi1), contact_schedule(gait_before.phi2));

    state_.action_prev2 = state_.action_prev;
    state_.action_prev = state_.action;
    state_.action = perm_.mask(action);
    state_.step_count += 1;

    StepResult result;
    result.reward = compute_reward(state_, cmd, gait_before, *spec_, cfg_->reward_weights);
    result.fell = fallen();
    result.done = result.fell || state_.step_count >= cfg_->horizon;
    result.tracking_abs_error = {
        std::abs(state_.vx - cmd.vx),
        std::abs(state_.vy - cmd.vy),
        std::abs(state_.yaw_rate - cmd.yaw_rate),
        std::abs((state_.height - spec_->nominal_base_height) - cmd.height_offset),
        std::abs(state_.pitch - cmd.pitch),
    };

    advance_gait_clock(state_.gait, cfg_->dt);
    history_.push_front(frame_before);
    history_.pop_back();

    if (cfg_->resample_interval > 0 && !fixed_command_ &&
        state_.step_count % cfg_->resample_interval == 0) {
      state_.command = next_command();
      state_.gait.frequency = state_.command.gait_frequency;
    }
    return result;
  }

  bool fallen() const {
    return state_.height < cfg_->fall_height_fraction * spec_->nominal_base_height ||
           std::abs(state_.pitch) > cfg_->fall_pitch;
  }

  ObservationBundle observe() const {
    ObservationBundle obs;
    obs.actor.resize(kActorObsDim);
    int at = 0;
    obs.actor.segment(at, kProprioFrameDim) = proprio_frame();
    at += kProprioFrameDim;
    for (const Vector& f : history_) {
      obs.actor.segment(at, kProprioFrameDim) = f;
      at += kProprioFrameDim;
    }
    obs.actor.segment(at, kCommandDim) = state_.command.as_vector();
    at += kCommandDim;
    obs.actor.segment(at, kClockDim) = clock_features(state_.gait);

    obs.critic.resize(kCriticObsDim);
    obs.critic.head(kActorObsDim) = obs.actor;
    at = kActorObsDim;
    obs.critic[at++] = state_.vx;
    obs.critic[at++] = state_.vy;
    obs.critic[at++] = state_.height_rate;
    const double h_target = spec_->nominal_base_height + state_.command.height_offset;
    obs.critic[at++] = h_target - state_.height;
    obs.critic[at++] = state_.feet[0].height;
    obs.critic[at++] = state_.feet[1].height;
    obs.critic[at++] = state_.feet[0].force_z;
    obs.critic[at++] = state_.feet[1].force_z;
    obs.critic[at++] = fallen() ? 1.0 : 0.0;
    obs.critic[at++] = state_.friction;
    obs.critic.segment(at, kHeightScanDim).setZero();
    at += kHeightScanDim;
    if (cfg_->embodiment_observation) {
      obs.critic.segment(at, kEmbodimentObsDim) = oea_;
    } else {
      obs.critic.segment(at, kEmbodimentObsDim).setZero();
    }
    return obs;
  }

 private:
  CommandVector next_command() {
    if (fixed_command_) return *fixed_command_;
    return sample_command(cfg_->commands, *curriculum_, rng_);
  }

  // q(32) + qd(32) + base angular rates(3) + projected gravity(3).
  Vector proprio_frame() const {
    Vector f(kProprioFrameDim);
    f.head(kUnifiedDim) = perm_.embed(state_.q);
    f.segment(kUnifiedDim, kUnifiedDim) = perm_.embed(state_.qd);
    f[2 * kUnifiedDim + 0] = state_.roll_rate;
    f[2 * kUnifiedDim + 1] = state_.pitch_rate;
    f[2 * kUnifiedDim + 2] = state_.yaw_rate;
    f.tail(3) = state_.gravity_proj;
    return f;
  }

  // Kinematic foot model: swing feet lift with knee flexion and move with the
  // base; stance feet carry load and creep only on low-friction ground.
  void update_feet(double contact_left, double contact_right) {
    const double contact[kFeetCount] = {contact_left, contact_right};
    const int knee[kFeetCount] = {left_knee_, right_knee_};
    const Eigen::Vector2d base_vel(state_.vx, state_.vy);
    const double creep = cfg_->slip_gain * (1.0 - std::min(state_.friction, 1.0));
    for (int j = 0; j < kFeetCount; ++j) {
      const double c = contact[j];
      FootState& f = state_.feet[j];
      f.height = cfg_->lift_gain * (1.0 - c) * std::abs(state_.q[knee[j]]);
      f.velocity_xy = ((1.0 - c) + c * creep) * base_vel;
      f.force_xy = cfg_->tangential_force_scale * c * base_vel;
      f.force_z = cfg_->contact_force_scale * c * (1.0 + 0.5 * std::max(0.0, -state_.height_rate));
      f.in_contact = c > 0.5;
    }
  }

  const EmbodimentSpec* spec_;
  const WorldConfig* cfg_;
  const CurriculumState* curriculum_;
  Vector oea_;
  SlotPermutation perm_;
  int left_knee_ = -1;
  int right_knee_ = -1;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
  WorldState state_;
  std::deque<Vector> history_;
  std::optional<CommandVector> fixed_command_;
};

}  // namespace fleet
