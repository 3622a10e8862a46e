#pragma once

#include "fleet/checkpoint.hpp"
#include "fleet/ppo.hpp"

#include <deque>
#include <string>
#include <vector>

namespace fleet {

// One training-log row; serialized through log_row below.
struct UpdateRecord {
  std::int64_t update = 0;
  std::vector<double> mean_return_by_spec;  // indexed by spec id over the batch's specs
  LossComponents loss;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double curriculum_progress = 0.0;
  // Running means over the curriculum window, ordered (vx, vy, w, h, p).
  Eigen::Matrix<double, kTrackedCommandDims, 1> tracking_running =
      Eigen::Matrix<double, kTrackedCommandDims, 1>::Zero();
  int falls = 0;
};

// Owns one collect/estimate/update cycle plus the command-range curriculum.
// All randomness derives from the constructor seed, so single-threaded runs
// with equal configs produce bit-identical logs.
class Trainer {
 public:
  Trainer(const Registry& registry, const WorldConfig& world_cfg, const PPOConfig& ppo_cfg,
          const NetConfig& net_cfg, std::uint64_t seed, int single_spec_id = -1, int n_threads = 1)
      : registry_(&registry),
        world_cfg_(world_cfg),
        cfg_(ppo_cfg),
        seed_(seed),
        batch_(registry, world_cfg, ppo_cfg.n_envs, derive_seed(seed, 0x656e7673ull),
               single_spec_id, std::nullopt, n_threads),
        params_(init_policy(net_cfg, derive_seed(seed, 0x696e6974ull))),
        opt_(make_adam_state(params_)),
        rng_(derive_seed(seed, 0x747261696ull)) {
    cfg_.validate();
  }

  const PolicyParams& params() const { return params_; }
  PolicyParams& params() { return params_; }
  AdamState& adam() { return opt_; }
  std::int64_t updates_done() const { return update_idx_; }
  double curriculum_progress() const { return batch_.curriculum().progress; }
  void set_curriculum_progress(double p) { batch_.curriculum().progress = p; }
  std::uint64_t seed() const { return seed_; }
  WorldBatch& batch() { return batch_; }

  // Replaces parameters wholesale (checkpoint restore, specialist fork).
  // Optimizer moments are rebuilt from zero unless the checkpoint carried them.
  void restore(const Checkpoint& ck) {
    params_ = ck.params;
    opt_ = ck.adam ? *ck.adam : make_adam_state(params_);
    update_idx_ = ck.meta.update_idx;
    batch_.curriculum().progress = ck.meta.curriculum_progress;
  }

  void set_params(const PolicyParams& p) {
    params_ = p;
    opt_ = make_adam_state(params_);
  }

  CheckpointMeta meta() const {
    CheckpointMeta m;
    m.registry_hash = registry_->hash();
    m.seed = seed_;
    m.update_idx = update_idx_;
    m.curriculum_progress = batch_.curriculum().progress;
    return m;
  }

  // One collect -> GAE -> PPO cycle, then the curriculum rule: progress
  // rises by the configured increment whenever the windowed mean of the
  // summed locomotion-command errors (vx + vy + w) is below the threshold.
  UpdateRecord step() {
    CollectStats stats;
    RolloutBuffer buf = collect_rollouts(params_, batch_, cfg_.horizon, rng_, &stats);
    compute_gae(buf, cfg_.gamma, cfg_.lam);
    const LossReport report = ppo_update(params_, opt_, buf, cfg_, rng_);
    update_idx_ += 1;

    err_window_.push_back(stats.tracking_error);
    while (static_cast<int>(err_window_.size()) > world_cfg_.curriculum_window) {
      err_window_.pop_front();
    }
    if (static_cast<int>(err_window_.size()) == world_cfg_.curriculum_window) {
      Eigen::Matrix<double, kTrackedCommandDims, 1> mean = window_mean();
      if (mean[0] + mean[1] + mean[2] < world_cfg_.curriculum_threshold) {
        CurriculumState& cur = batch_.curriculum();
        cur.progress = std::min(1.0, cur.progress + world_cfg_.curriculum_increment);
      }
    }

    UpdateRecord rec;
    rec.update = update_idx_;
    rec.mean_return_by_spec.assign(static_cast<std::size_t>(registry_->size()), 0.0);
    for (const auto& [sid, r] : stats.mean_reward_by_spec) {
      if (sid >= 0 && sid < registry_->size()) {
        rec.mean_return_by_spec[static_cast<std::size_t>(sid)] = r;
      }
    }
    rec.loss = report.mean;
    rec.approx_kl = report.approx_kl;
    rec.clip_fraction = report.clip_fraction;
    rec.curriculum_progress = batch_.curriculum().progress;
    rec.tracking_running = window_mean();
    rec.falls = stats.falls;
    return rec;
  }

  // Header matching log_row's column order. Per-embodiment return columns
  // carry the registry names so logs are self-describing.
  std::string log_header() const {
    std::string h = "update";
    for (int i = 0; i < registry_->size(); ++i) h += ",return_" + registry_->spec(i).name;
    h += ",loss_surrogate,loss_value,loss_entropy,loss_estimation,loss_action_match,"
         "loss_latent_match,loss_total,approx_kl,clip_fraction,curriculum_progress,"
         "err_vx,err_vy,err_w,err_h,err_p,falls";
    return h;
  }

  static std::string log_row(const UpdateRecord& rec) {
    std::string row = std::to_string(rec.update);
    for (double r : rec.mean_return_by_spec) row += "," + format_double(r);
    for (double v : {rec.loss.surrogate, rec.loss.value, rec.loss.entropy, rec.loss.estimation,
                     rec.loss.action_match, rec.loss.latent_match, rec.loss.total, rec.approx_kl,
                     rec.clip_fraction, rec.curriculum_progress}) {
      row += "," + format_double(v);
    }
    for (int d = 0; d < kTrackedCommandDims; ++d) row += "," + format_double(rec.tracking_running[d]);
    row += "," + std::to_string(rec.falls);
    return row;
  }

 private:
  Eigen::Matrix<double, kTrackedCommandDims, 1> window_mean() const {
    Eigen::Matrix<double, kTrackedCommandDims, 1> mean =
        Eigen::Matrix<double, kTrackedCommandDims, 1>::Zero();
    if (err_window_.empty()) return mean;
    for (const auto& e : err_window_) mean += e;
    return mean / static_cast<double>(err_window_.size());
  }

  const Registry* registry_;
  WorldConfig world_cfg_;
  PPOConfig cfg_;
  std::uint64_t seed_;
  WorldBatch batch_;
  PolicyParams params_;
  AdamState opt_;
  std::mt19937_64 rng_;
  std::int64_t update_idx_ = 0;
  std::deque<Eigen::Matrix<double, kTrackedCommandDims, 1>> err_window_;
};

}  // namespace fleet
