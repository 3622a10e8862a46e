#pragma once

#include "fleet/distill.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>

namespace fleet {

// Everything one run needs, loaded from a single YAML file that references
// the registry directory and world file as fragments. Relative paths resolve
// against the config file's own directory. FLEET_SEED and FLEET_OUT are the
// only environment overrides; all other knobs live in the file so a run
// directory's snapshot fully describes the run.
struct RunConfig {
  std::string registry_dir;
  std::string world_path;
  std::uint64_t seed = 1;
  std::string out_dir = "run";
  std::int64_t updates = 1000;
  NetConfig net;
  PPOConfig ppo;
  LoopConfig loop;
  EvalProtocol eval;
  bool embodiment_observation = true;
  bool iterative = true;  // false: single distillation round
  std::string single_robot;  // train on this embodiment only when non-empty

  WorldConfig world;  // loaded from world_path, ablation flag applied
};

namespace detail {

inline std::string resolve_relative(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path.string() : (base / path).lexically_normal().string();
}

}  // namespace detail

inline RunConfig load_run_config(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  const std::string where = std::filesystem::path(path).filename().string();
  detail::require_keys(root,
                       {"schema_version", "registry", "world", "seed", "out_dir", "updates", "net",
                        "ppo", "loop", "eval", "ablations"},
                       where);
  if (YAML::Node n = root["schema_version"]) {
    if (n.as<int>() != kRegistrySchemaVersion) {
      throw ConfigError(where + ": unsupported schema_version");
    }
  }

  RunConfig cfg;
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  if (YAML::Node n = root["registry"]) cfg.registry_dir = detail::resolve_relative(base, n.as<std::string>());
  if (YAML::Node n = root["world"]) cfg.world_path = detail::resolve_relative(base, n.as<std::string>());
  if (cfg.registry_dir.empty()) throw ConfigError(where + ": 'registry' is required");
  if (cfg.world_path.empty()) throw ConfigError(where + ": 'world' is required");
  if (YAML::Node n = root["seed"]) cfg.seed = n.as<std::uint64_t>();
  if (YAML::Node n = root["out_dir"]) cfg.out_dir = n.as<std::string>();
  if (YAML::Node n = root["updates"]) cfg.updates = n.as<std::int64_t>();

  if (YAML::Node n = root["net"]) {
    detail::require_keys(n, {"trunk_hidden", "latent_dim", "critic_hidden"}, where + ".net");
    if (YAML::Node v = n["trunk_hidden"]) cfg.net.trunk_hidden = v.as<int>();
    if (YAML::Node v = n["latent_dim"]) cfg.net.latent_dim = v.as<int>();
    if (YAML::Node v = n["critic_hidden"]) cfg.net.critic_hidden = v.as<int>();
  }
  if (YAML::Node n = root["ppo"]) {
    detail::require_keys(n,
                         {"gamma", "lam", "clip_eps", "entropy_coef", "value_coef",
                          "estimation_coef", "learning_rate", "epochs", "minibatch_size", "horizon",
                          "n_envs", "normalize_advantages", "max_grad_norm"},
                         where + ".ppo");
    if (YAML::Node v = n["gamma"]) cfg.ppo.gamma = v.as<double>();
    if (YAML::Node v = n["lam"]) cfg.ppo.lam = v.as<double>();
    if (YAML::Node v = n["clip_eps"]) cfg.ppo.clip_eps = v.as<double>();
    if (YAML::Node v = n["entropy_coef"]) cfg.ppo.entropy_coef = v.as<double>();
    if (YAML::Node v = n["value_coef"]) cfg.ppo.value_coef = v.as<double>();
    if (YAML::Node v = n["estimation_coef"]) cfg.ppo.estimation_coef = v.as<double>();
    if (YAML::Node v = n["learning_rate"]) cfg.ppo.adam.lr = v.as<double>();
    if (YAML::Node v = n["epochs"]) cfg.ppo.epochs = v.as<int>();
    if (YAML::Node v = n["minibatch_size"]) cfg.ppo.minibatch_size = v.as<int>();
    if (YAML::Node v = n["horizon"]) cfg.ppo.horizon = v.as<int>();
    if (YAML::Node v = n["n_envs"]) cfg.ppo.n_envs = v.as<int>();
    if (YAML::Node v = n["normalize_advantages"]) cfg.ppo.normalize_advantages = v.as<bool>();
    if (YAML::Node v = n["max_grad_norm"]) cfg.ppo.max_grad_norm = v.as<double>();
  }
  if (YAML::Node n = root["loop"]) {
    detail::require_keys(n,
                         {"alpha", "beta", "distill_epochs", "specialist_updates", "max_rounds",
                          "improvement_threshold", "patience"},
                         where + ".loop");
    if (YAML::Node v = n["alpha"]) cfg.loop.alpha = v.as<double>();
    if (YAML::Node v = n["beta"]) cfg.loop.beta = v.as<double>();
    if (YAML::Node v = n["distill_epochs"]) cfg.loop.distill_epochs = v.as<int>();
    if (YAML::Node v = n["specialist_updates"]) cfg.loop.specialist_updates = v.as<int>();
    if (YAML::Node v = n["max_rounds"]) cfg.loop.max_rounds = v.as<int>();
    if (YAML::Node v = n["improvement_threshold"]) cfg.loop.improvement_threshold = v.as<double>();
    if (YAML::Node v = n["patience"]) cfg.loop.patience = v.as<int>();
  }
  if (YAML::Node n = root["eval"]) {
    detail::require_keys(n, {"n_envs", "n_steps", "command_mode", "fall_rate_threshold"},
                         where + ".eval");
    if (YAML::Node v = n["n_envs"]) cfg.eval.n_envs = v.as<int>();
    if (YAML::Node v = n["n_steps"]) cfg.eval.n_steps = v.as<int>();
    if (YAML::Node v = n["command_mode"]) cfg.eval.command_mode = v.as<std::string>();
    if (YAML::Node v = n["fall_rate_threshold"]) cfg.eval.fall_rate_threshold = v.as<double>();
  }
  if (YAML::Node n = root["ablations"]) {
    detail::require_keys(n, {"embodiment_observation", "iterative", "single_robot"},
                         where + ".ablations");
    if (YAML::Node v = n["embodiment_observation"]) cfg.embodiment_observation = v.as<bool>();
    if (YAML::Node v = n["iterative"]) {
      const std::string mode = v.as<std::string>();
      if (mode == "full") {
        cfg.iterative = true;
      } else if (mode == "single") {
        cfg.iterative = false;
      } else {
        throw ConfigError(where + ".ablations.iterative must be 'full' or 'single'");
      }
    }
    if (YAML::Node v = n["single_robot"]) cfg.single_robot = v.as<std::string>();
  }

  if (const char* env = std::getenv("FLEET_SEED")) {
    try {
      cfg.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError("FLEET_SEED must be an unsigned integer, got '" + std::string(env) + "'");
    }
  }
  if (const char* env = std::getenv("FLEET_OUT")) cfg.out_dir = env;

  if (!std::filesystem::is_directory(cfg.registry_dir)) {
    throw ConfigError(where + ": registry directory not found: " + cfg.registry_dir);
  }
  if (!std::filesystem::is_regular_file(cfg.world_path)) {
    throw ConfigError(where + ": world config not found: " + cfg.world_path);
  }

  cfg.world = load_world_config(cfg.world_path);
  // Removing the embodiment observation also removes the actor's estimation
  // task; both sides see only zeros for the feature block.
  cfg.world.embodiment_observation = cfg.embodiment_observation;
  if (!cfg.embodiment_observation) cfg.ppo.estimation_coef = 0.0;
  if (!cfg.iterative) cfg.loop.max_rounds = std::min(cfg.loop.max_rounds, 1);

  cfg.ppo.validate();
  cfg.loop.validate();
  cfg.eval.validate();
  if (cfg.updates < 0) throw ConfigError(where + ": updates must be >= 0");
  return cfg;
}

// The exact configuration a run executed with, written into its output
// directory. Reloading this snapshot reproduces the run (absolute paths, all
// defaults materialized, overrides applied).
inline std::string serialize_run_config(const RunConfig& cfg) {
  std::string out;
  out += "schema_version: 1\n";
  out += "registry: " + cfg.registry_dir + "\n";
  out += "world: " + cfg.world_path + "\n";
  out += "seed: " + std::to_string(cfg.seed) + "\n";
  out += "out_dir: " + cfg.out_dir + "\n";
  out += "updates: " + std::to_string(cfg.updates) + "\n";
  out += "net:\n";
  out += "  trunk_hidden: " + std::to_string(cfg.net.trunk_hidden) + "\n";
  out += "  latent_dim: " + std::to_string(cfg.net.latent_dim) + "\n";
  out += "  critic_hidden: " + std::to_string(cfg.net.critic_hidden) + "\n";
  out += "ppo:\n";
  out += "  gamma: " + format_double(cfg.ppo.gamma) + "\n";
  out += "  lam: " + format_double(cfg.ppo.lam) + "\n";
  out += "  clip_eps: " + format_double(cfg.ppo.clip_eps) + "\n";
  out += "  entropy_coef: " + format_double(cfg.ppo.entropy_coef) + "\n";
  out += "  value_coef: " + format_double(cfg.ppo.value_coef) + "\n";
  out += "  estimation_coef: " + format_double(cfg.ppo.estimation_coef) + "\n";
  out += "  learning_rate: " + format_double(cfg.ppo.adam.lr) + "\n";
  out += "  epochs: " + std::to_string(cfg.ppo.epochs) + "\n";
  out += "  minibatch_size: " + std::to_string(cfg.ppo.minibatch_size) + "\n";
  out += "  horizon: " + std::to_string(cfg.ppo.horizon) + "\n";
  out += "  n_envs: " + std::to_string(cfg.ppo.n_envs) + "\n";
  out += std::string("  normalize_advantages: ") + (cfg.ppo.normalize_advantages ? "true" : "false") + "\n";
  out += "  max_grad_norm: " + format_double(cfg.ppo.max_grad_norm) + "\n";
  out += "loop:\n";
  out += "  alpha: " + format_double(cfg.loop.alpha) + "\n";
  out += "  beta: " + format_double(cfg.loop.beta) + "\n";
  out += "  distill_epochs: " + std::to_string(cfg.loop.distill_epochs) + "\n";
  out += "  specialist_updates: " + std::to_string(cfg.loop.specialist_updates) + "\n";
  out += "  max_rounds: " + std::to_string(cfg.loop.max_rounds) + "\n";
  out += "  improvement_threshold: " + format_double(cfg.loop.improvement_threshold) + "\n";
  out += "  patience: " + std::to_string(cfg.loop.patience) + "\n";
  out += "eval:\n";
  out += "  n_envs: " + std::to_string(cfg.eval.n_envs) + "\n";
  out += "  n_steps: " + std::to_string(cfg.eval.n_steps) + "\n";
  out += "  command_mode: " + cfg.eval.command_mode + "\n";
  out += "  fall_rate_threshold: " + format_double(cfg.eval.fall_rate_threshold) + "\n";
  out += "ablations:\n";
  out += std::string("  embodiment_observation: ") + (cfg.embodiment_observation ? "true" : "false") + "\n";
  out += std::string("  iterative: ") + (cfg.iterative ? "full" : "single") + "\n";
  out += "  single_robot: \"" + cfg.single_robot + "\"\n";
  return out;
}

}  // namespace fleet
