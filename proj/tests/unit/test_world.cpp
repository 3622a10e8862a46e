#include "fleet/world_batch.hpp"

#include "../support/stats.hpp"
#include "test_helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace fleet;

namespace {

WorldConfig quiet_config() {
  WorldConfig cfg;
  cfg.noise_sigma = 0.0;
  cfg.resample_interval = 0;
  return cfg;
}

WorldInstance make_instance(const EmbodimentSpec& spec, const WorldConfig& cfg,
                            const CurriculumState& cur, std::uint64_t seed) {
  const Registry& reg = fleet::test::shipped_registry();
  return WorldInstance(spec, cfg, cur, reg.embodiment_observation(spec.id), seed);
}

}  // namespace

TEST_CASE("reset puts the robot at its nominal configuration with zeroed history") {
  const Registry& reg = fleet::test::shipped_registry();
  const WorldConfig cfg = quiet_config();
  const CurriculumState cur;
  for (const EmbodimentSpec& spec : reg.specs()) {
    WorldInstance w = make_instance(spec, cfg, cur, 3);
    REQUIRE(w.state().height == spec.nominal_base_height);
    REQUIRE(w.state().q == spec.default_pose);
    REQUIRE(w.state().qd.isZero(0.0));
    REQUIRE(w.state().step_count == 0);
    REQUIRE(w.state().gait.phi1 == 0.0);

    const ObservationBundle obs = w.observe();
    REQUIRE(obs.actor.size() == kActorObsDim);
    REQUIRE(obs.critic.size() == kCriticObsDim);
    // Frames t-1..t-4 are zero immediately after reset; frame t carries the
    // default pose.
    REQUIRE(!obs.actor.head(kProprioFrameDim).isZero(0.0));
    REQUIRE(obs.actor.segment(kProprioFrameDim, (kProprioFrames - 1) * kProprioFrameDim).isZero(0.0));
    // Command block sits right after the proprio window.
    REQUIRE(obs.actor.segment(kProprioWindowDim, kCommandDim) == w.state().command.as_vector());
  }
}

TEST_CASE("resets are deterministic per seed and differ across seeds") {
  const EmbodimentSpec& spec = fleet::test::shipped_registry().spec(1);
  const WorldConfig cfg = quiet_config();
  const CurriculumState cur;
  WorldInstance a = make_instance(spec, cfg, cur, 42);
  WorldInstance b = make_instance(spec, cfg, cur, 42);
  WorldInstance c = make_instance(spec, cfg, cur, 43);
  REQUIRE(a.state().command.as_vector() == b.state().command.as_vector());
  REQUIRE(a.state().friction == b.state().friction);
  REQUIRE(a.state().command.as_vector() != c.state().command.as_vector());
}

TEST_CASE("zero action from rest leaves the base exactly still") {
  const EmbodimentSpec& spec = fleet::test::shipped_registry().spec(0);
  const WorldConfig cfg = quiet_config();
  const CurriculumState cur;
  WorldInstance w = make_instance(spec, cfg, cur, 7);
  const Vector zero = Vector::Zero(kUnifiedDim);
  for (int i = 0; i < 10; ++i) {
    w.step(zero);
    REQUIRE(w.state().vx == 0.0);
    REQUIRE(w.state().vy == 0.0);
    REQUIRE(w.state().yaw_rate == 0.0);
    REQUIRE(w.state().height == spec.nominal_base_height);
    REQUIRE(w.state().pitch == 0.0);
    REQUIRE(w.state().pos_x == 0.0);
  }
}

TEST_CASE("joint PD follows the closed form for one step") {
  const EmbodimentSpec& spec = fleet::test::shipped_registry().spec(2);
  const WorldConfig cfg = quiet_config();
  const CurriculumState cur;
  WorldInstance w = make_instance(spec, cfg, cur, 11);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> normal;
  Vector native(spec.n_dofs);
  for (int i = 0; i < native.size(); ++i) native[i] = 0.3 * normal(rng);
  const Vector q0 = w.state().q;
  w.step(embed_action(native, spec));
  const Vector tau = spec.stiffness.cwiseProduct(native - q0);  // qd0 == 0
  const Vector qd1 = tau * cfg.dt;
  const Vector q1 = q0 + qd1 * cfg.dt;
  REQUIRE((w.state().tau - tau).lpNorm<Eigen::Infinity>() < 1e-14);
  REQUIRE((w.state().qd - qd1).lpNorm<Eigen::Infinity>() < 1e-14);
  REQUIRE((w.state().q - q1).lpNorm<Eigen::Infinity>() < 1e-14);
  REQUIRE(w.state().qdd == w.state().tau);
}

TEST_CASE("base velocity decays geometrically under drag") {
  const EmbodimentSpec& spec = fleet::test::shipped_registry().spec(0);
  const WorldConfig cfg = quiet_config();
  const CurriculumState cur;
  WorldInstance w = make_instance(spec, cfg, cur, 17);
  w.mutable_state().vx = 1.0;
  const Vector zero = Vector::Zero(kUnifiedDim);
  double expected = 1.0;
  for (int i = 0; i < 50; ++i) {
    w.step(zero);
    expected *= 1.0 - cfg.drag * cfg.dt;
    REQUIRE(w.state().vx == Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("commands resample on the configured interval") {
  const EmbodimentSpec& spec = fleet::test::shipped_registry().spec(3);
  WorldConfig cfg = quiet_config();
  cfg.resample_interval = 5;
  const CurriculumState cur;
  WorldInstance w = make_instance(spec, cfg, cur, 19);
  const Vector zero = Vector::Zero(kUnifiedDim);
  const Vector cmd0 = w.state().command.as_vector();
  for (int i = 0; i < 4; ++i) {
    w.step(zero);
    REQUIRE(w.state().command.as_vector() == cmd0);
  }
  w.step(zero);
  REQUIRE(w.state().command.as_vector() != cmd0);
  REQUIRE(w.state().gait.frequency == w.state().command.gait_frequency);
}

TEST_CASE("falls terminate the episode") {
  const EmbodimentSpec& spec = fleet::test::shipped_registry().spec(0);
  const WorldConfig cfg = quiet_config();
  const CurriculumState cur;
  const Vector zero = Vector::Zero(kUnifiedDim);
  SECTION("low base") {
    WorldInstance w = make_instance(spec, cfg, cur, 23);
    w.mutable_state().height = 0.39 * spec.nominal_base_height;
    const StepResult r = w.step(zero);
    REQUIRE(r.fell);
    REQUIRE(r.done);
  }
  SECTION("excessive pitch") {
    WorldInstance w = make_instance(spec, cfg, cur, 23);
    w.mutable_state().pitch = 1.2;
    const StepResult r = w.step(zero);
    REQUIRE(r.fell);
    REQUIRE(r.done);
  }
}

TEST_CASE("episodes end at the horizon without falling") {
  const EmbodimentSpec& spec = fleet::test::shipped_registry().spec(0);
  WorldConfig cfg = quiet_config();
  cfg.horizon = 3;
  const CurriculumState cur;
  WorldInstance w = make_instance(spec, cfg, cur, 29);
  const Vector zero = Vector::Zero(kUnifiedDim);
  REQUIRE(!w.step(zero).done);
  REQUIRE(!w.step(zero).done);
  const StepResult last = w.step(zero);
  REQUIRE(last.done);
  REQUIRE(!last.fell);
}

TEST_CASE("non-finite actions raise a numerics error naming the robot") {
  const EmbodimentSpec& spec = fleet::test::shipped_registry().spec(0);
  const WorldConfig cfg = quiet_config();
  const CurriculumState cur;
  WorldInstance w = make_instance(spec, cfg, cur, 31);
  Vector bad = Vector::Zero(kUnifiedDim);
  bad[4] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_WITH(w.step(bad), Catch::Matchers::ContainsSubstring("H1surrogate"));
}

TEST_CASE("trajectories are reproducible per seed") {
  const EmbodimentSpec& spec = fleet::test::shipped_registry().spec(4);
  WorldConfig cfg;  // default config, noise on
  cfg.resample_interval = 50;
  const CurriculumState cur;
  WorldInstance a = make_instance(spec, cfg, cur, 37);
  WorldInstance b = make_instance(spec, cfg, cur, 37);
  std::mt19937_64 rng(41);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 120; ++i) {
    Vector action(kUnifiedDim);
    for (int k = 0; k < kUnifiedDim; ++k) action[k] = 0.2 * normal(rng);
    const StepResult ra = a.step(action);
    const StepResult rb = b.step(action);
    REQUIRE(ra.reward.total == rb.reward.total);
    REQUIRE(a.state().q == b.state().q);
    REQUIRE(a.state().vx == b.state().vx);
  }
}

TEST_CASE("projected gravity keeps unit norm along noisy rollouts") {
  const EmbodimentSpec& spec = fleet::test::shipped_registry().spec(1);
  WorldConfig cfg;
  const CurriculumState cur;
  WorldInstance w = make_instance(spec, cfg, cur, 43);
  std::mt19937_64 rng(47);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 200; ++i) {
    Vector action(kUnifiedDim);
    for (int k = 0; k < kUnifiedDim; ++k) action[k] = 0.3 * normal(rng);
    w.step(action);
    REQUIRE(std::abs(w.state().gravity_proj.norm() - 1.0) < 1e-12);
  }
}

TEST_CASE("foot model ties clearance and loading to the gait clock") {
  const EmbodimentSpec& spec = fleet::test::shipped_registry().spec(0);
  const WorldConfig cfg = quiet_config();
  const CurriculumState cur;
  WorldInstance w = make_instance(spec, cfg, cur, 53);
  // Drive mid-stance for foot 0 / mid-swing for foot 1.
  w.mutable_state().gait.phi1 = 0.25;
  w.mutable_state().gait.phi2 = 0.75;
  const Vector action = embed_action(spec.default_pose, spec);
  w.step(action);
  const WorldState& s = w.state();
  REQUIRE(s.feet[0].in_contact);
  REQUIRE(!s.feet[1].in_contact);
  REQUIRE(s.feet[0].force_z == Catch::Approx(cfg.contact_force_scale).epsilon(0.01));
  REQUIRE(s.feet[1].force_z < 0.01);
  const int left_knee = spec.native_index_of_slot(7);
  REQUIRE(s.feet[1].height ==
          Catch::Approx(cfg.lift_gain * std::abs(s.q[left_knee])).epsilon(0.01));
  REQUIRE(s.feet[0].height < cfg.lift_gain * 0.01 * std::abs(s.q[left_knee]) + 1e-6);
}

TEST_CASE("critic observation carries the embodiment block unless ablated") {
  const Registry& reg = fleet::test::shipped_registry();
  const CurriculumState cur;
  WorldConfig cfg = quiet_config();
  {
    WorldInstance w = make_instance(reg.spec(2), cfg, cur, 59);
    const ObservationBundle obs = w.observe();
    REQUIRE(obs.critic.tail(kEmbodimentObsDim) == reg.embodiment_observation(2));
    REQUIRE(obs.critic.segment(kCriticObsDim - kEmbodimentObsDim - kHeightScanDim, kHeightScanDim)
                .isZero(0.0));
    REQUIRE(obs.critic.head(kActorObsDim) == obs.actor);
  }
  cfg.embodiment_observation = false;
  {
    WorldInstance w = make_instance(reg.spec(2), cfg, cur, 59);
    REQUIRE(w.observe().critic.tail(kEmbodimentObsDim).isZero(0.0));
  }
}

TEST_CASE("tracking errors report against the command active during the step") {
  const EmbodimentSpec& spec = fleet::test::shipped_registry().spec(0);
  const WorldConfig cfg = quiet_config();
  const CurriculumState cur;
  WorldInstance w = make_instance(spec, cfg, cur, 61);
  const CommandVector cmd = w.state().command;
  const StepResult r = w.step(Vector::Zero(kUnifiedDim));
  REQUIRE(r.tracking_abs_error[0] == Catch::Approx(std::abs(w.state().vx - cmd.vx)).margin(1e-15));
  REQUIRE(r.tracking_abs_error[3] ==
          Catch::Approx(std::abs(w.state().height - spec.nominal_base_height - cmd.height_offset))
              .margin(1e-15));
}

TEST_CASE("sampled command endpoints look uniform (KS)") {
  const EmbodimentSpec& spec = fleet::test::shipped_registry().spec(0);
  WorldConfig cfg = quiet_config();
  cfg.resample_interval = 1;  // resample every step to harvest samples fast
  CurriculumState cur;
  const CommandTable table;
  for (double progress : {0.0, 1.0}) {
    cur.progress = progress;
    WorldInstance w = make_instance(spec, cfg, cur, 67);
    std::vector<double> vx, yaw;
    const Vector zero = Vector::Zero(kUnifiedDim);
    for (int i = 0; i < 4000; ++i) {
      vx.push_back(w.state().command.vx);
      yaw.push_back(w.state().command.yaw_rate);
      w.step(zero);
      if (w.state().step_count >= cfg.horizon - 1) w.reset();
    }
    const Range rvx = current_range(table, CommandDim::kVx, progress);
    const Range ryaw = current_range(table, CommandDim::kYawRate, progress);
    REQUIRE(fleet::test::ks_uniform_pvalue(vx, rvx.lo, rvx.hi) > 0.001);
    REQUIRE(fleet::test::ks_uniform_pvalue(yaw, ryaw.lo, ryaw.hi) > 0.001);
  }
}

TEST_CASE("world batch interleaves embodiments round-robin and auto-resets") {
  const Registry& reg = fleet::test::shipped_registry();
  WorldConfig cfg = quiet_config();
  cfg.horizon = 4;
  WorldBatch batch(reg, cfg, 10, 71);
  for (int i = 0; i < 10; ++i) REQUIRE(batch.spec_id(i) == i % reg.size());

  Matrix actions = Matrix::Zero(10, kUnifiedDim);
  for (int t = 0; t < 3; ++t) batch.step_all(actions);
  const BatchStep last = batch.step_all(actions);
  for (int i = 0; i < 10; ++i) {
    REQUIRE(last.dones[static_cast<std::size_t>(i)] == 1);
    REQUIRE(batch.env(i).state().step_count == 0);  // auto-reset happened
  }
}

TEST_CASE("world batch is deterministic regardless of thread count") {
  const Registry& reg = fleet::test::shipped_registry();
  const WorldConfig cfg;  // noise on
  WorldBatch a(reg, cfg, 8, 73, -1, std::nullopt, 1);
  WorldBatch b(reg, cfg, 8, 73, -1, std::nullopt, 4);
  std::mt19937_64 rng(79);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 25; ++t) {
    Matrix actions(8, kUnifiedDim);
    for (int i = 0; i < actions.size(); ++i) actions.data()[i] = 0.2 * normal(rng);
    const BatchStep ra = a.step_all(actions);
    const BatchStep rb = b.step_all(actions);
    REQUIRE(ra.rewards == rb.rewards);
  }
  Matrix actor_a, critic_a, actor_b, critic_b;
  a.observe_all(actor_a, critic_a);
  b.observe_all(actor_b, critic_b);
  REQUIRE(actor_a == actor_b);
  REQUIRE(critic_a == critic_b);
}

TEST_CASE("single-robot batches and fixed commands are honored") {
  const Registry& reg = fleet::test::shipped_registry();
  const WorldConfig cfg = quiet_config();
  CommandVector fixed;
  fixed.vx = 0.5;
  fixed.gait_frequency = 1.5;
  WorldBatch batch(reg, cfg, 6, 83, 2, fixed);
  for (int i = 0; i < 6; ++i) {
    REQUIRE(batch.spec_id(i) == 2);
    REQUIRE(batch.env(i).state().command.vx == 0.5);
  }
}
