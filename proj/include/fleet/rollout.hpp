#pragma once

#include "fleet/policy.hpp"
#include "fleet/world_batch.hpp"

#include <map>
#include <random>
#include <vector>

namespace fleet {

// On-policy experience, time-major: row index(t, e) = t * n_envs + e.
struct RolloutBuffer {
  int n_steps = 0;
  int n_envs = 0;

  Matrix actor_obs;
  Matrix privileged_obs;
  Matrix actions;
  Matrix latents;  // actor latent at collection time
  Vector log_probs;
  Vector values;
  Vector rewards;
  std::vector<std::uint8_t> dones;
  std::vector<int> spec_ids;
  // Content hash of the policy that produced each transition.
  std::vector<std::uint64_t> provenance;

  Vector final_values;  // bootstrap values for the state after the last step

  Vector advantages;
  Vector returns;

  // Filled by relabel().
  Matrix specialist_actions;
  Matrix specialist_latents;
  bool relabeled = false;

  int size() const { return n_steps * n_envs; }
  int index(int t, int e) const { return t * n_envs + e; }
};

// Aggregates used for logging and the curriculum rule.
struct CollectStats {
  double mean_reward = 0.0;
  // Mean absolute tracking error per tracked command dim over all steps.
  Eigen::Matrix<double, kTrackedCommandDims, 1> tracking_error =
      Eigen::Matrix<double, kTrackedCommandDims, 1>::Zero();
  int falls = 0;
  int episodes_finished = 0;
  std::map<int, double> mean_reward_by_spec;
};

// Runs the policy for `n_steps` across the batch. Actions are sampled on the
// calling thread env-by-env so results do not depend on how the world batch
// parallelizes stepping.
inline RolloutBuffer collect_rollouts(const PolicyParams& params, WorldBatch& batch, int n_steps,
                                      std::mt19937_64& rng, CollectStats* stats = nullptr) {
  const int n_envs = batch.size();
  RolloutBuffer buf;
  buf.n_steps = n_steps;
  buf.n_envs = n_envs;
  const int total = n_steps * n_envs;
  buf.actor_obs.resize(total, params.cfg.actor_obs_dim());
  buf.privileged_obs.resize(total, params.cfg.privileged_dim);
  buf.actions.resize(total, params.cfg.action_dim);
  buf.latents.resize(total, params.cfg.latent_dim);
  buf.log_probs.resize(total);
  buf.values.resize(total);
  buf.rewards.resize(total);
  buf.dones.assign(static_cast<std::size_t>(total), 0);
  buf.spec_ids.resize(static_cast<std::size_t>(total));
  buf.provenance.assign(static_cast<std::size_t>(total), param_hash(params));

  const Vector sigma = action_std(params);
  Matrix actor_obs, critic_obs;
  CollectStats local;
  Eigen::Matrix<double, kTrackedCommandDims, 1> err_sum =
      Eigen::Matrix<double, kTrackedCommandDims, 1>::Zero();
  std::map<int, double> reward_sum_by_spec;
  std::map<int, int> count_by_spec;

  for (int t = 0; t < n_steps; ++t) {
    batch.observe_all(actor_obs, critic_obs);
    if (!actor_obs.allFinite() || !critic_obs.allFinite()) {
      for (int e = 0; e < n_envs; ++e) {
        if (!actor_obs.row(e).allFinite() || !critic_obs.row(e).allFinite()) {
          throw NumericsError("non-finite observation at rollout step " + std::to_string(t) +
                              " for embodiment id " + std::to_string(batch.spec_id(e)));
        }
      }
    }
    const ActorOut actor = actor_forward(params, actor_obs);
    const Vector values = critic_forward(params, critic_obs);

    Matrix actions(n_envs, params.cfg.action_dim);
    for (int e = 0; e < n_envs; ++e) {
      const Vector a = sample_action(actor.mean.row(e).transpose(), sigma, rng);
      actions.row(e) = a;
      buf.log_probs[buf.index(t, e)] = gaussian_log_prob(actor.mean.row(e).transpose(), a, sigma);
    }

    const BatchStep step = batch.step_all(actions);
    if (!step.rewards.allFinite()) {
      for (int e = 0; e < n_envs; ++e) {
        if (!std::isfinite(step.rewards[e])) {
          throw NumericsError("non-finite reward at rollout step " + std::to_string(t) +
                              " for embodiment id " + std::to_string(batch.spec_id(e)));
        }
      }
    }

    for (int e = 0; e < n_envs; ++e) {
      const int row = buf.index(t, e);
      buf.actor_obs.row(row) = actor_obs.row(e);
      buf.privileged_obs.row(row) = critic_obs.row(e);
      buf.actions.row(row) = actions.row(e);
      buf.latents.row(row) = actor.latent.row(e);
      buf.values[row] = values[e];
      buf.rewards[row] = step.rewards[e];
      buf.dones[static_cast<std::size_t>(row)] = step.dones[static_cast<std::size_t>(e)];
      buf.spec_ids[static_cast<std::size_t>(row)] = batch.spec_id(e);
      local.falls += step.fell[static_cast<std::size_t>(e)];
      local.episodes_finished += step.dones[static_cast<std::size_t>(e)];
      err_sum += step.tracking_abs_error.row(e).transpose();
      reward_sum_by_spec[batch.spec_id(e)] += step.rewards[e];
      count_by_spec[batch.spec_id(e)] += 1;
    }
  }

  batch.observe_all(actor_obs, critic_obs);
  buf.final_values = critic_forward(params, critic_obs);

  if (stats) {
    local.mean_reward = buf.rewards.mean();
    local.tracking_error = err_sum / static_cast<double>(total);
    for (const auto& [sid, sum] : reward_sum_by_spec) {
      local.mean_reward_by_spec[sid] = sum / count_by_spec[sid];
    }
    *stats = local;
  }
  return buf;
}

// Generalized advantage estimation. `advantages` are left raw (normalization,
// when enabled, happens inside the update); `returns` = advantages + values.
inline void compute_gae(RolloutBuffer& buf, double gamma, double lam) {
  const int T = buf.n_steps;
  const int E = buf.n_envs;
  buf.advantages.resize(buf.size());
  buf.returns.resize(buf.size());
  for (int e = 0; e < E; ++e) {
    double next_adv = 0.0;
    for (int t = T - 1; t >= 0; --t) {
      const int row = buf.index(t, e);
      const double nonterminal = buf.dones[static_cast<std::size_t>(row)] ? 0.0 : 1.0;
      const double next_value = t + 1 < T ? buf.values[buf.index(t + 1, e)] : buf.final_values[e];
      const double delta =
          buf.rewards[row] + gamma * next_value * nonterminal - buf.values[row];
      next_adv = delta + gamma * lam * nonterminal * next_adv;
      buf.advantages[row] = next_adv;
    }
  }
  buf.returns = buf.advantages + buf.values;
}

}  // namespace fleet
