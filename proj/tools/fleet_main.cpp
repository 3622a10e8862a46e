#include "fleet/config.hpp"
#include "fleet/latents.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitNumerics = 2;
constexpr int kExitThreshold = 3;

struct GlobalOpts {
  std::string config_path;
  int threads = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

fleet::RunConfig load_config(const GlobalOpts& g) {
  fleet::RunConfig cfg = fleet::load_run_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  if (g.out_dir) cfg.out_dir = *g.out_dir;
  return cfg;
}

void write_snapshot(const fleet::RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  fleet::detail::write_text_file(fs::path(cfg.out_dir) / "config.yaml",
                                 fleet::serialize_run_config(cfg));
}

int resolve_single_spec(const fleet::Registry& registry, const std::string& name) {
  return name.empty() ? -1 : registry.spec_by_name(name).id;
}

void print_report(const fleet::TrackingReport& report) {
  std::printf("%-16s %10s %10s %10s %10s %10s %10s\n", "embodiment", "E_vx", "E_vy", "E_w", "E_h",
              "E_p", "fall_rate");
  for (const fleet::TrackingRow& r : report.rows) {
    std::printf("%-16s %10.4f %10.4f %10.4f %10.4f %10.4f %10.4f\n", r.embodiment.c_str(),
                r.error[0], r.error[1], r.error[2], r.error[3], r.error[4], r.fall_rate);
  }
  std::printf("(%d envs x %d steps, seed %llu, commands %s)\n", report.n_envs, report.n_steps,
              static_cast<unsigned long long>(report.seed), report.command_mode.c_str());
}

int cmd_train(const GlobalOpts& g, std::optional<std::int64_t> updates_override,
              const std::string& single_robot_override) {
  fleet::RunConfig cfg = load_config(g);
  if (updates_override) cfg.updates = *updates_override;
  if (!single_robot_override.empty()) cfg.single_robot = single_robot_override;

  const fleet::Registry registry = fleet::Registry::load(cfg.registry_dir);
  const int single = resolve_single_spec(registry, cfg.single_robot);
  write_snapshot(cfg);

  fleet::Trainer trainer(registry, cfg.world, cfg.ppo, cfg.net, cfg.seed, single, g.threads);
  const fs::path ckpt_path = fs::path(cfg.out_dir) / "policy.ckpt";
  const fs::path log_path = fs::path(cfg.out_dir) / "training_log.csv";
  bool resumed = false;
  if (fs::exists(ckpt_path)) {
    trainer.restore(fleet::load_checkpoint(ckpt_path, registry.hash()));
    resumed = true;
    std::printf("resuming from update %lld\n", static_cast<long long>(trainer.updates_done()));
  }

  std::ofstream log(log_path, resumed ? std::ios::app : std::ios::trunc);
  if (!log) throw fleet::ConfigError("cannot write '" + log_path.string() + "'");
  if (!resumed) log << trainer.log_header() << "\n";

  while (trainer.updates_done() < cfg.updates) {
    const fleet::UpdateRecord rec = trainer.step();
    log << fleet::Trainer::log_row(rec) << "\n";
    log.flush();
    if (rec.update % 10 == 0 || rec.update == cfg.updates) {
      std::printf("update %lld  loss %.4f  progress %.2f\n", static_cast<long long>(rec.update),
                  rec.loss.total, rec.curriculum_progress);
    }
    fleet::save_checkpoint(ckpt_path, trainer.params(), trainer.meta(), &trainer.adam());
  }
  std::printf("wrote %s\n", ckpt_path.string().c_str());
  return 0;
}

int cmd_distill(const GlobalOpts& g, const std::string& ckpt, std::optional<int> max_rounds) {
  fleet::RunConfig cfg = load_config(g);
  if (max_rounds) cfg.loop.max_rounds = *max_rounds;

  const fleet::Registry registry = fleet::Registry::load(cfg.registry_dir);
  const fleet::Checkpoint start = fleet::load_checkpoint(ckpt, registry.hash());
  write_snapshot(cfg);

  const fleet::LoopResult result =
      fleet::run_loop(start.params, registry, cfg.world, cfg.ppo, cfg.loop, cfg.eval, cfg.seed,
                      cfg.out_dir, start.meta.curriculum_progress, /*resume=*/true, g.threads);
  for (const fleet::RoundReport& r : result.reports) {
    std::printf("round %d  generalist task error %.4f -> %.4f\n", r.round, r.generalist_pre,
                r.generalist_post);
  }
  std::printf("%s after %d round(s)\n", result.converged ? "converged" : "stopped",
              result.rounds_run);
  return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& ckpt, bool with_latents, int latent_steps) {
  fleet::RunConfig cfg = load_config(g);
  const fleet::Registry registry = fleet::Registry::load(cfg.registry_dir);
  const fleet::Checkpoint ck = fleet::load_checkpoint(ckpt, registry.hash());
  write_snapshot(cfg);

  const fleet::TrackingReport report =
      fleet::evaluate_tracking(ck.params, registry, cfg.world, cfg.eval, cfg.seed, std::nullopt,
                               -1, g.threads, fs::path(ckpt).filename().string());
  print_report(report);
  fleet::detail::write_text_file(fs::path(cfg.out_dir) / "report.csv",
                                 fleet::serialize_report(report));

  if (with_latents) {
    const fleet::LatentDump dump =
        fleet::dump_latents(ck.params, registry, cfg.world, latent_steps, cfg.seed);
    fleet::detail::write_text_file(fs::path(cfg.out_dir) / "latents.csv",
                                   fleet::serialize_latents(dump));
  }

  for (const fleet::TrackingRow& r : report.rows) {
    if (r.fall_rate > cfg.eval.fall_rate_threshold) {
      std::fprintf(stderr, "fall rate %.3f for %s exceeds threshold %.3f\n", r.fall_rate,
                   r.embodiment.c_str(), cfg.eval.fall_rate_threshold);
      return kExitThreshold;
    }
  }
  return 0;
}

int cmd_latents(const GlobalOpts& g, const std::string& ckpt, int steps) {
  fleet::RunConfig cfg = load_config(g);
  const fleet::Registry registry = fleet::Registry::load(cfg.registry_dir);
  const fleet::Checkpoint ck = fleet::load_checkpoint(ckpt, registry.hash());
  write_snapshot(cfg);

  const fleet::LatentDump dump = fleet::dump_latents(ck.params, registry, cfg.world, steps, cfg.seed);
  fleet::detail::write_text_file(fs::path(cfg.out_dir) / "latents.csv",
                                 fleet::serialize_latents(dump));
  if (registry.size() > 1 && steps > 0) {
    std::printf("silhouette %.4f over %d rows\n", fleet::silhouette_score(dump),
                static_cast<int>(dump.latents.rows()));
  }
  return 0;
}

int cmd_compare(const std::string& path_a, const std::string& path_b) {
  auto read_report = [](const std::string& p) {
    std::ifstream in(p);
    if (!in) throw fleet::ConfigError("cannot open report '" + p + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fleet::parse_report(text);
  };
  const fleet::TrackingReport a = read_report(path_a);
  const fleet::TrackingReport b = read_report(path_b);
  const fleet::ReportDiff diff = fleet::compare_reports(a, b);

  std::printf("%-16s %10s %10s %10s %10s %10s %10s\n", "embodiment", "dE_vx", "dE_vy", "dE_w",
              "dE_h", "dE_p", "dfall");
  for (const fleet::TrackingRow& r : diff.rows) {
    std::printf("%-16s %+10.4f %+10.4f %+10.4f %+10.4f %+10.4f %+10.4f\n", r.embodiment.c_str(),
                r.error[0], r.error[1], r.error[2], r.error[3], r.error[4], r.fall_rate);
  }
  std::printf("a wins %d, b wins %d, ties %d (lower error wins)\n", diff.wins_a, diff.wins_b,
              diff.ties);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-embodiment locomotion training pipeline"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--threads", g.threads, "Worker threads (1 = bitwise deterministic)");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", g.config_path, "Run config file")->required();
    sub->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { g.seed = s; },
                                            "Override the config seed");
    sub->add_option_function<std::string>("--out", [&](const std::string& o) { g.out_dir = o; },
                                          "Override the output directory");
  };

  auto* train = app.add_subcommand("train", "Train the generalist (or a single-robot policy)");
  add_common(train);
  std::int64_t updates = -1;
  std::string single_robot;
  train->add_option("--updates", updates, "Total update count to reach");
  train->add_option("--single-robot", single_robot, "Restrict training to one embodiment");

  auto* distill = app.add_subcommand("distill", "Run the specialize/generalize loop");
  add_common(distill);
  std::string distill_ckpt;
  int max_rounds = -1;
  distill->add_option("--ckpt", distill_ckpt, "Generalist checkpoint to start from")->required();
  distill->add_option("--max-rounds", max_rounds, "Override the round limit");

  auto* eval = app.add_subcommand("eval", "Tracking-error report for a checkpoint");
  add_common(eval);
  std::string eval_ckpt;
  bool eval_latents = false;
  int eval_latent_steps = 200;
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint to evaluate")->required();
  eval->add_flag("--latents", eval_latents, "Also write latents.csv");
  eval->add_option("--latent-steps", eval_latent_steps, "Steps per embodiment for --latents");

  auto* latents = app.add_subcommand("latents", "Dump per-step policy latents");
  add_common(latents);
  std::string latents_ckpt;
  int latent_steps = 200;
  latents->add_option("--ckpt", latents_ckpt, "Checkpoint to dump")->required();
  latents->add_option("--steps", latent_steps, "Steps per embodiment");

  auto* compare = app.add_subcommand("compare", "Diff two tracking reports");
  std::string report_a, report_b;
  compare->add_option("--a", report_a, "First report.csv")->required();
  compare->add_option("--b", report_b, "Second report.csv")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      return cmd_train(g, updates >= 0 ? std::optional<std::int64_t>(updates) : std::nullopt,
                       single_robot);
    }
    if (distill->parsed()) {
      return cmd_distill(g, distill_ckpt,
                         max_rounds >= 0 ? std::optional<int>(max_rounds) : std::nullopt);
    }
    if (eval->parsed()) return cmd_eval(g, eval_ckpt, eval_latents, eval_latent_steps);
    if (latents->parsed()) return cmd_latents(g, latents_ckpt, latent_steps);
    if (compare->parsed()) return cmd_compare(report_a, report_b);
  } catch (const fleet::NumericsError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerics;
  } catch (const fleet::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return 0;
}
