#pragma once

#include "fleet/evaluate.hpp"
#include "fleet/train.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace fleet {

// Specialize-then-generalize loop settings. alpha weighs the action-match
// loss, beta the latent-match loss; distill_epochs is the number of
// relabel/update passes per round.
struct LoopConfig {
  double alpha = 0.02;
  double beta = 1.0;
  int distill_epochs = 200;
  int specialist_updates = 300;
  int max_rounds = 4;
  // Stop once relative improvement of the generalist's task-command error
  // stays below this for `patience` consecutive rounds.
  double improvement_threshold = 0.02;
  int patience = 2;

  void validate() const {
    if (alpha < 0.0 || beta < 0.0) throw ConfigError("loop: alpha and beta must be >= 0");
    if (distill_epochs < 1) throw ConfigError("loop: distill_epochs must be >= 1");
    if (specialist_updates < 0) throw ConfigError("loop: specialist_updates must be >= 0");
    if (max_rounds < 0) throw ConfigError("loop: max_rounds must be >= 0");
    if (patience < 1) throw ConfigError("loop: patience must be >= 1");
  }
};

struct RoundReport {
  int round = 0;
  struct SpecialistEntry {
    std::string name;
    double pre_error = 0.0;   // task-command error at fork time
    double post_error = 0.0;  // after fine-tuning
  };
  std::vector<SpecialistEntry> specialists;
  double generalist_pre = 0.0;
  double generalist_post = 0.0;
  std::vector<LossComponents> trace;  // one entry per distill epoch
};

struct RelabelStats {
  std::map<int, long> rows_by_spec;  // rows each specialist relabeled
};

// Deep copies of the generalist, one per embodiment, indexed by spec id.
inline std::vector<PolicyParams> fork_specialists(const PolicyParams& generalist,
                                                  const Registry& registry) {
  std::vector<PolicyParams> out;
  out.reserve(static_cast<std::size_t>(registry.size()));
  for (int i = 0; i < registry.size(); ++i) out.push_back(clone_policy(generalist));
  return out;
}

// Overwrites the buffer's specialist targets: for every transition of
// embodiment i, the action target is specialist i's distribution mean at the
// stored observation and the latent target its trunk output. Specialists are
// read-only; a specialist is only queried when the buffer holds rows for it.
inline RelabelStats relabel(RolloutBuffer& buf, const std::vector<PolicyParams>& specialists) {
  const int total = buf.size();
  std::map<int, std::vector<int>> rows_by_spec;
  for (int r = 0; r < total; ++r) {
    const int sid = buf.spec_ids[static_cast<std::size_t>(r)];
    if (sid < 0 || sid >= static_cast<int>(specialists.size())) {
      throw ConfigError("relabel: no specialist for embodiment id " + std::to_string(sid));
    }
    rows_by_spec[sid].push_back(r);
  }

  RelabelStats stats;
  if (total == 0) {
    buf.relabeled = true;
    return stats;
  }
  buf.specialist_actions.resize(total, specialists[0].cfg.action_dim);
  buf.specialist_latents.resize(total, specialists[0].cfg.latent_dim);
  for (const auto& [sid, rows] : rows_by_spec) {
    Matrix obs(static_cast<Eigen::Index>(rows.size()), buf.actor_obs.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) obs.row(static_cast<Eigen::Index>(i)) = buf.actor_obs.row(rows[i]);
    const ActorOut out = actor_forward(specialists[static_cast<std::size_t>(sid)], obs);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      buf.specialist_actions.row(rows[i]) = out.mean.row(static_cast<Eigen::Index>(i));
      buf.specialist_latents.row(rows[i]) = out.latent.row(static_cast<Eigen::Index>(i));
    }
    stats.rows_by_spec[sid] = static_cast<long>(rows.size());
  }
  buf.relabeled = true;
  return stats;
}

// Combined update: the usual clipped-surrogate objective plus
// alpha * action-match and beta * latent-match against the relabeled
// targets. With alpha = beta = 0 this is exactly ppo_update.
inline LossReport distill_update(PolicyParams& params, AdamState& opt, const RolloutBuffer& buf,
                                 const PPOConfig& cfg, double alpha, double beta,
                                 std::mt19937_64& rng) {
  if (alpha < 0.0 || beta < 0.0) throw ConfigError("distill_update: alpha and beta must be >= 0");
  if ((alpha > 0.0 || beta > 0.0) && !buf.relabeled) {
    throw ConfigError("distill_update: buffer has no specialist targets; call relabel first");
  }
  return detail::update_policy(params, opt, buf, cfg, alpha, beta, rng);
}

// Standard PPO on a single-embodiment batch with a fresh optimizer. Returns
// the fine-tuned copy; the input is untouched.
inline PolicyParams finetune_specialist(const PolicyParams& specialist, const Registry& registry,
                                        const WorldConfig& world_cfg, const PPOConfig& ppo_cfg,
                                        int spec_id, int n_updates, std::uint64_t seed,
                                        double curriculum_progress = 1.0, int n_threads = 1) {
  if (n_updates == 0) return specialist;
  Trainer trainer(registry, world_cfg, ppo_cfg, specialist.cfg, seed, spec_id, n_threads);
  trainer.set_params(specialist);
  trainer.set_curriculum_progress(curriculum_progress);
  for (int i = 0; i < n_updates; ++i) trainer.step();
  return trainer.params();
}

namespace detail {

inline std::string serialize_round_report(const RoundReport& report) {
  std::string out = "record,name,metric,value\n";
  out += "round,,index," + std::to_string(report.round) + "\n";
  out += "generalist,,pre_task_error," + format_double(report.generalist_pre) + "\n";
  out += "generalist,,post_task_error," + format_double(report.generalist_post) + "\n";
  for (const RoundReport::SpecialistEntry& s : report.specialists) {
    out += "specialist," + s.name + ",pre_task_error," + format_double(s.pre_error) + "\n";
    out += "specialist," + s.name + ",post_task_error," + format_double(s.post_error) + "\n";
  }
  for (std::size_t e = 0; e < report.trace.size(); ++e) {
    const LossComponents& t = report.trace[e];
    const std::string tag = "trace," + std::to_string(e + 1) + ",";
    out += tag + "ppo," + format_double(t.surrogate) + "\n";
    out += tag + "action_match," + format_double(t.action_match) + "\n";
    out += tag + "latent_match," + format_double(t.latent_match) + "\n";
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw ConfigError("short write on '" + path.string() + "'");
}

}  // namespace detail

struct LoopResult {
  PolicyParams generalist;
  std::vector<RoundReport> reports;
  int rounds_run = 0;
  bool converged = false;
};

// The full specialize/generalize loop. Each round forks specialists from the
// current generalist, fine-tunes them on their own embodiment, then runs
// distill_epochs cycles of fresh generalist rollouts relabeled with
// specialist targets. Round artifacts land in out_dir/round_<k>; the
// directory is populated under a temporary name and renamed only when
// complete, so an interrupted round never corrupts earlier ones. With
// resume=true the loop restarts after the last complete round.
inline LoopResult run_loop(const PolicyParams& initial, const Registry& registry,
                           const WorldConfig& world_cfg, const PPOConfig& ppo_cfg,
                           const LoopConfig& loop_cfg, const EvalProtocol& protocol,
                           std::uint64_t seed, const std::filesystem::path& out_dir,
                           double curriculum_progress = 1.0, bool resume = false,
                           int n_threads = 1) {
  namespace fs = std::filesystem;
  loop_cfg.validate();
  ppo_cfg.validate();
  protocol.validate();
  fs::create_directories(out_dir);

  LoopResult result;
  result.generalist = clone_policy(initial);
  int start_round = 1;
  if (resume) {
    for (int k = loop_cfg.max_rounds; k >= 1; --k) {
      const fs::path ckpt = out_dir / ("round_" + std::to_string(k)) / "generalist.ckpt";
      if (fs::exists(ckpt)) {
        result.generalist = load_checkpoint(ckpt, registry.hash()).params;
        start_round = k + 1;
        result.rounds_run = k;
        break;
      }
    }
  }

  const std::uint64_t eval_seed = derive_seed(seed, 0x6576616cull);
  auto generalist_error = [&](const PolicyParams& p) {
    const TrackingReport report =
        evaluate_tracking(p, registry, world_cfg, protocol, eval_seed, std::nullopt, -1, n_threads);
    return mean_task_command_error(report);
  };
  auto specialist_error = [&](const PolicyParams& p, int sid) {
    const TrackingReport report =
        evaluate_tracking(p, registry, world_cfg, protocol, eval_seed, std::nullopt, sid, n_threads);
    return task_command_error(report.rows.at(0));
  };

  AdamState opt = make_adam_state(result.generalist);
  std::mt19937_64 distill_rng(derive_seed(seed, 0x64616767ull));
  WorldBatch batch(registry, world_cfg, ppo_cfg.n_envs, derive_seed(seed, 0x6c6f6f70ull), -1,
                   std::nullopt, n_threads);
  batch.curriculum().progress = curriculum_progress;

  double prev_error = generalist_error(result.generalist);
  int low_improvement_streak = 0;

  for (int round = start_round; round <= loop_cfg.max_rounds; ++round) {
    RoundReport report;
    report.round = round;
    report.generalist_pre = prev_error;

    std::vector<PolicyParams> specialists = fork_specialists(result.generalist, registry);
    for (int sid = 0; sid < registry.size(); ++sid) {
      RoundReport::SpecialistEntry entry;
      entry.name = registry.spec(sid).name;
      entry.pre_error = specialist_error(specialists[static_cast<std::size_t>(sid)], sid);
      specialists[static_cast<std::size_t>(sid)] = finetune_specialist(
          specialists[static_cast<std::size_t>(sid)], registry, world_cfg, ppo_cfg, sid,
          loop_cfg.specialist_updates,
          derive_seed(seed, (static_cast<std::uint64_t>(round) << 8) | static_cast<std::uint64_t>(sid)),
          curriculum_progress, n_threads);
      entry.post_error = specialist_error(specialists[static_cast<std::size_t>(sid)], sid);
      report.specialists.push_back(std::move(entry));
    }

    for (int epoch = 0; epoch < loop_cfg.distill_epochs; ++epoch) {
      RolloutBuffer buf =
          collect_rollouts(result.generalist, batch, ppo_cfg.horizon, distill_rng);
      compute_gae(buf, ppo_cfg.gamma, ppo_cfg.lam);
      relabel(buf, specialists);
      const LossReport losses = distill_update(result.generalist, opt, buf, ppo_cfg,
                                               loop_cfg.alpha, loop_cfg.beta, distill_rng);
      report.trace.push_back(losses.mean);
    }
    report.generalist_post = generalist_error(result.generalist);

    const fs::path final_dir = out_dir / ("round_" + std::to_string(round));
    const fs::path tmp_dir = out_dir / ("round_" + std::to_string(round) + ".tmp");
    fs::remove_all(tmp_dir);
    fs::remove_all(final_dir);
    fs::create_directories(tmp_dir);
    CheckpointMeta meta;
    meta.registry_hash = registry.hash();
    meta.seed = seed;
    meta.update_idx = round;
    meta.curriculum_progress = curriculum_progress;
    save_checkpoint(tmp_dir / "generalist.ckpt", result.generalist, meta, &opt);
    for (int sid = 0; sid < registry.size(); ++sid) {
      save_checkpoint(tmp_dir / ("specialist_" + registry.spec(sid).name + ".ckpt"),
                      specialists[static_cast<std::size_t>(sid)], meta);
    }
    detail::write_text_file(tmp_dir / "report.csv", detail::serialize_round_report(report));
    fs::rename(tmp_dir, final_dir);

    result.reports.push_back(std::move(report));
    result.rounds_run = round;

    const double cur = result.reports.back().generalist_post;
    const double improvement = prev_error > 0.0 ? (prev_error - cur) / prev_error : 0.0;
    prev_error = cur;
    if (improvement < loop_cfg.improvement_threshold) {
      low_improvement_streak += 1;
      if (low_improvement_streak >= loop_cfg.patience) {
        result.converged = true;
        break;
      }
    } else {
      low_improvement_streak = 0;
    }
  }
  return result;
}

}  // namespace fleet
