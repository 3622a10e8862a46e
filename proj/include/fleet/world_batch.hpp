#pragma once

#include "fleet/world.hpp"

#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace fleet {

struct BatchStep {
  Vector rewards;
  std::vector<std::uint8_t> dones;
  std::vector<std::uint8_t> fell;
  // Per-env |measured - commanded|, columns (vx, vy, w, h, p).
  Matrix tracking_abs_error;
};

// A fixed set of world instances stepped together. Env i simulates
// embodiment (i mod N) so every robot receives the same share of
// experience. Each instance owns its RNG stream, which makes batch results
// independent of how stepping work is split across threads.
class WorldBatch {
 public:
  WorldBatch(const Registry& registry, const WorldConfig& cfg, int n_envs, std::uint64_t seed,
             int single_spec_id = -1, std::optional<CommandVector> fixed_command = std::nullopt,
             int n_threads = 1)
      : registry_(&registry),
        cfg_(std::make_unique<WorldConfig>(cfg)),
        curriculum_(std::make_unique<CurriculumState>()),
        n_threads_(n_threads < 1 ? 1 : n_threads) {
    if (n_envs < 1) throw ConfigError("world batch needs at least one env");
    if (single_spec_id >= registry.size()) {
      throw ConfigError("single_spec_id " + std::to_string(single_spec_id) + " out of range");
    }
    envs_.reserve(static_cast<std::size_t>(n_envs));
    for (int i = 0; i < n_envs; ++i) {
      const int sid = single_spec_id >= 0 ? single_spec_id : i % registry.size();
      envs_.emplace_back(registry.spec(sid), *cfg_, *curriculum_, registry.embodiment_observation(sid),
                         derive_seed(seed, static_cast<std::uint64_t>(i)), fixed_command);
    }
  }

  int size() const { return static_cast<int>(envs_.size()); }
  const WorldConfig& config() const { return *cfg_; }
  CurriculumState& curriculum() { return *curriculum_; }
  const CurriculumState& curriculum() const { return *curriculum_; }
  WorldInstance& env(int i) { return envs_[static_cast<std::size_t>(i)]; }
  const WorldInstance& env(int i) const { return envs_[static_cast<std::size_t>(i)]; }
  int spec_id(int i) const { return envs_[static_cast<std::size_t>(i)].state().spec_id; }

  void reset_all() {
    for (WorldInstance& e : envs_) e.reset();
  }

  // Actor observations (rows) and privileged critic observations (rows).
  void observe_all(Matrix& actor, Matrix& critic) const {
    actor.resize(size(), kActorObsDim);
    critic.resize(size(), kCriticObsDim);
    for (int i = 0; i < size(); ++i) {
      const ObservationBundle obs = envs_[static_cast<std::size_t>(i)].observe();
      actor.row(i) = obs.actor;
      critic.row(i) = obs.critic;
    }
  }

  // Steps every env with its row of `actions`; envs that finish are reset in
  // place when `auto_reset` is set (their next observation starts a fresh
  // episode).
  BatchStep step_all(const Matrix& actions, bool auto_reset = true) {
    if (actions.rows() != size() || actions.cols() != kUnifiedDim) {
      throw ConfigError("step_all: action matrix must be n_envs x 32");
    }
    BatchStep out;
    out.rewards.resize(size());
    out.dones.assign(static_cast<std::size_t>(size()), 0);
    out.fell.assign(static_cast<std::size_t>(size()), 0);
    out.tracking_abs_error.resize(size(), kTrackedCommandDims);

    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto run_range = [&](int lo, int hi) {
      try {
        for (int i = lo; i < hi; ++i) {
          const StepResult r = envs_[static_cast<std::size_t>(i)].step(actions.row(i).transpose());
          out.rewards[i] = r.reward.total;
          out.dones[static_cast<std::size_t>(i)] = r.done ? 1 : 0;
          out.fell[static_cast<std::size_t>(i)] = r.fell ? 1 : 0;
          for (int d = 0; d < kTrackedCommandDims; ++d) {
            out.tracking_abs_error(i, d) = r.tracking_abs_error[static_cast<std::size_t>(d)];
          }
          if (r.done && auto_reset) envs_[static_cast<std::size_t>(i)].reset();
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        failure = std::current_exception();
      }
    };

    if (n_threads_ == 1 || size() < 2 * n_threads_) {
      run_range(0, size());
    } else {
      std::vector<std::thread> workers;
      const int chunk = (size() + n_threads_ - 1) / n_threads_;
      for (int t = 0; t < n_threads_; ++t) {
        const int lo = t * chunk;
        const int hi = std::min(size(), lo + chunk);
        if (lo >= hi) break;
        workers.emplace_back(run_range, lo, hi);
      }
      for (std::thread& w : workers) w.join();
    }
    if (failure) std::rethrow_exception(failure);
    return out;
  }

 private:
  const Registry* registry_;
  std::unique_ptr<WorldConfig> cfg_;
  std::unique_ptr<CurriculumState> curriculum_;
  int n_threads_;
  std::vector<WorldInstance> envs_;
};

}  // namespace fleet
