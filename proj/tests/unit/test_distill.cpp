#include "fleet/config.hpp"

#include "test_helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <numeric>
#include <random>
#include <vector>

using namespace fleet;
namespace fs = std::filesystem;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::MessageMatches;

namespace {

NetConfig mini_config() {
  NetConfig c;
  c.proprio_dim = 8;
  c.command_dim = 2;
  c.clock_dim = 2;
  c.trunk_hidden = 6;
  c.latent_dim = 4;
  c.action_dim = 3;
  c.oea_dim = 3;
  c.privileged_dim = 7;
  c.critic_hidden = 5;
  return c;
}

// Real observation widths, tiny capacity: cheap enough to run world rollouts.
NetConfig small_config() {
  NetConfig c;
  c.trunk_hidden = 16;
  c.latent_dim = 8;
  c.critic_hidden = 16;
  return c;
}

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

// Synthetic on-policy buffer, same construction as the policy-update tests;
// spec ids cycle over n_specs embodiments.
RolloutBuffer make_buffer(const PolicyParams& params, int T, int E, std::mt19937_64& rng,
                          int n_specs = 1) {
  RolloutBuffer buf;
  buf.n_steps = T;
  buf.n_envs = E;
  const int total = T * E;
  buf.actor_obs = random_matrix(total, params.cfg.actor_obs_dim(), rng);
  buf.privileged_obs = random_matrix(total, params.cfg.privileged_dim, rng);
  const ActorOut out = actor_forward(params, buf.actor_obs);
  const Vector sigma = action_std(params);
  buf.actions.resize(total, params.cfg.action_dim);
  buf.log_probs.resize(total);
  for (int i = 0; i < total; ++i) {
    const Vector a = sample_action(out.mean.row(i).transpose(), sigma, rng);
    buf.actions.row(i) = a;
    buf.log_probs[i] = gaussian_log_prob(out.mean.row(i).transpose(), a, sigma);
  }
  buf.latents = out.latent;
  buf.values = critic_forward(params, buf.privileged_obs);
  buf.rewards = random_matrix(total, 1, rng).col(0);
  buf.dones.assign(static_cast<std::size_t>(total), 0);
  buf.spec_ids.resize(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) buf.spec_ids[static_cast<std::size_t>(i)] = i % n_specs;
  buf.provenance.assign(static_cast<std::size_t>(total), param_hash(params));
  buf.final_values = random_matrix(E, 1, rng).col(0);
  compute_gae(buf, 0.99, 0.95);
  return buf;
}

// Two real robots copied out of the shipped registry.
Registry two_robot_registry(const fleet::test::TempDir& td) {
  for (const char* f : {"h1surrogate.yaml", "g1surrogate.yaml", "normalization.yaml"}) {
    fs::copy_file(fleet::test::registry_dir() + "/" + f, td.path() / f);
  }
  return Registry::load(td.path().string());
}

WorldConfig quiet_world() {
  WorldConfig cfg;
  cfg.noise_sigma = 0.0;
  return cfg;
}

PPOConfig tiny_ppo() {
  PPOConfig cfg;
  cfg.n_envs = 4;
  cfg.horizon = 3;
  cfg.epochs = 1;
  cfg.minibatch_size = 0;
  return cfg;
}

EvalProtocol tiny_protocol() {
  EvalProtocol protocol;
  protocol.n_envs = 2;
  protocol.n_steps = 3;
  return protocol;
}

}  // namespace

TEST_CASE("forked specialists are independent exact copies") {
  std::mt19937_64 rng(11);
  const Registry& reg = fleet::test::shipped_registry();
  const PolicyParams generalist = init_policy(mini_config(), 3);

  std::vector<PolicyParams> specialists = fork_specialists(generalist, reg);
  REQUIRE(specialists.size() == static_cast<std::size_t>(reg.size()));

  const Matrix obs = random_matrix(6, generalist.cfg.actor_obs_dim(), rng);
  const ActorOut reference = actor_forward(generalist, obs);
  for (const PolicyParams& s : specialists) {
    CHECK(param_hash(s) == param_hash(generalist));
    const ActorOut out = actor_forward(s, obs);
    CHECK(out.mean == reference.mean);
    CHECK(out.latent == reference.latent);
  }

  // Mutating one fork must leave the generalist and its siblings untouched.
  specialists[0].trunk.layers[0].weight(0, 0) += 1.0;
  CHECK(param_hash(specialists[0]) != param_hash(generalist));
  CHECK(param_hash(specialists[1]) == param_hash(generalist));
  CHECK(actor_forward(generalist, obs).mean == reference.mean);
}

TEST_CASE("relabeling against fresh forks matches the policy's own outputs") {
  std::mt19937_64 rng(21);
  const Registry& reg = fleet::test::shipped_registry();
  const PolicyParams params = init_policy(mini_config(), 4);
  const std::vector<PolicyParams> specialists = fork_specialists(params, reg);

  SECTION("single embodiment, targets identical bitwise") {
    RolloutBuffer buf = make_buffer(params, 4, 3, rng, 1);
    relabel(buf, specialists);
    REQUIRE(buf.relabeled);
    PPOConfig cfg;
    cfg.normalize_advantages = false;
    std::vector<int> rows(static_cast<std::size_t>(buf.size()));
    std::iota(rows.begin(), rows.end(), 0);
    const LossComponents losses =
        evaluate_minibatch(params, buf, rows, buf.advantages, cfg, 1.0, 1.0, nullptr);
    CHECK(losses.action_match == 0.0);
    CHECK(losses.latent_match == 0.0);
  }
  SECTION("mixed embodiments, gap bounded by rounding") {
    RolloutBuffer buf = make_buffer(params, 4, 3, rng, reg.size());
    relabel(buf, specialists);
    PPOConfig cfg;
    cfg.normalize_advantages = false;
    std::vector<int> rows(static_cast<std::size_t>(buf.size()));
    std::iota(rows.begin(), rows.end(), 0);
    const LossComponents losses =
        evaluate_minibatch(params, buf, rows, buf.advantages, cfg, 1.0, 1.0, nullptr);
    CHECK(losses.action_match < 1e-24);
    CHECK(losses.latent_match < 1e-24);
  }
}

TEST_CASE("relabel routes each row to its own specialist") {
  std::mt19937_64 rng(31);
  const PolicyParams generalist = init_policy(mini_config(), 5);
  RolloutBuffer buf = make_buffer(generalist, 5, 3, rng, 3);

  // Specialist s answers with the generalist's mean shifted by s/10 in every
  // action coordinate; the latent is untouched by a head-bias change.
  std::vector<PolicyParams> specialists;
  for (int s = 0; s < 3; ++s) {
    specialists.push_back(clone_policy(generalist));
    specialists.back().action_head.bias.array() += 0.1 * s;
  }
  const RelabelStats stats = relabel(buf, specialists);

  REQUIRE(stats.rows_by_spec.size() == 3);
  CHECK(stats.rows_by_spec.at(0) == 5);
  CHECK(stats.rows_by_spec.at(1) == 5);
  CHECK(stats.rows_by_spec.at(2) == 5);

  const ActorOut base = actor_forward(generalist, buf.actor_obs);
  for (int r = 0; r < buf.size(); ++r) {
    const double shift = 0.1 * buf.spec_ids[static_cast<std::size_t>(r)];
    const Vector expected = base.mean.row(r).array() + shift;
    CHECK((buf.specialist_actions.row(r).transpose() - expected).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((buf.specialist_latents.row(r) - base.latent.row(r)).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("relabel rejects rows without a specialist and accepts empty buffers") {
  std::mt19937_64 rng(41);
  const PolicyParams generalist = init_policy(mini_config(), 6);
  std::vector<PolicyParams> specialists;
  specialists.push_back(clone_policy(generalist));

  SECTION("unknown embodiment id") {
    RolloutBuffer buf = make_buffer(generalist, 2, 2, rng, 1);
    buf.spec_ids[1] = 7;
    CHECK_THROWS_MATCHES(relabel(buf, specialists), ConfigError,
                         MessageMatches(ContainsSubstring("no specialist for embodiment id 7")));
  }
  SECTION("empty buffer") {
    RolloutBuffer buf;
    const RelabelStats stats = relabel(buf, specialists);
    CHECK(buf.relabeled);
    CHECK(stats.rows_by_spec.empty());
  }
}

TEST_CASE("relabel is deterministic and read-only for the specialists") {
  std::mt19937_64 rng(51);
  const Registry& reg = fleet::test::shipped_registry();
  const PolicyParams generalist = init_policy(mini_config(), 7);
  std::vector<PolicyParams> specialists = fork_specialists(generalist, reg);
  for (std::size_t s = 0; s < specialists.size(); ++s) {
    specialists[s].trunk.layers[0].bias.array() += 0.01 * static_cast<double>(s + 1);
  }
  std::vector<std::uint64_t> hashes_before;
  for (const PolicyParams& s : specialists) hashes_before.push_back(param_hash(s));

  RolloutBuffer a = make_buffer(generalist, 4, 2, rng, reg.size());
  RolloutBuffer b = a;
  relabel(a, specialists);
  relabel(b, specialists);
  CHECK(a.specialist_actions == b.specialist_actions);
  CHECK(a.specialist_latents == b.specialist_latents);
  for (std::size_t s = 0; s < specialists.size(); ++s) {
    CHECK(param_hash(specialists[s]) == hashes_before[s]);
  }
}

TEST_CASE("distillation with zero weights reproduces the plain update bitwise") {
  std::mt19937_64 rng(61);
  const PolicyParams params = init_policy(mini_config(), 8);
  RolloutBuffer buf = make_buffer(params, 3, 2, rng, 1);
  relabel(buf, fork_specialists(params, fleet::test::shipped_registry()));

  PPOConfig cfg;
  cfg.epochs = 2;
  cfg.minibatch_size = 4;

  PolicyParams p1 = clone_policy(params);
  PolicyParams p2 = clone_policy(params);
  AdamState opt1 = make_adam_state(p1);
  AdamState opt2 = make_adam_state(p2);
  std::mt19937_64 rng1(77);
  std::mt19937_64 rng2(77);
  const LossReport a = ppo_update(p1, opt1, buf, cfg, rng1);
  const LossReport b = distill_update(p2, opt2, buf, cfg, 0.0, 0.0, rng2);

  CHECK(loss_trace_equal(a, b));
  CHECK(a.approx_kl == b.approx_kl);
  CHECK(param_hash(p1) == param_hash(p2));
}

TEST_CASE("distill_update validates weights, targets and data freshness") {
  std::mt19937_64 rng(71);
  const PolicyParams params = init_policy(mini_config(), 9);
  PPOConfig cfg;
  cfg.epochs = 1;
  cfg.minibatch_size = 0;

  PolicyParams p = clone_policy(params);
  AdamState opt = make_adam_state(p);
  std::mt19937_64 update_rng(5);

  SECTION("negative weights") {
    RolloutBuffer buf = make_buffer(params, 2, 2, rng, 1);
    CHECK_THROWS_AS(distill_update(p, opt, buf, cfg, -0.1, 0.0, update_rng), ConfigError);
  }
  SECTION("distillation weights without relabeled targets") {
    RolloutBuffer buf = make_buffer(params, 2, 2, rng, 1);
    CHECK_THROWS_MATCHES(distill_update(p, opt, buf, cfg, 0.02, 1.0, update_rng), ConfigError,
                         MessageMatches(ContainsSubstring("call relabel first")));
  }
  SECTION("a relabeled buffer from another policy is refused") {
    RolloutBuffer buf = make_buffer(params, 2, 2, rng, 1);
    relabel(buf, {clone_policy(params)});
    buf.provenance[3] ^= 0xdeadbeefull;
    CHECK_THROWS_MATCHES(
        distill_update(p, opt, buf, cfg, 0.02, 1.0, update_rng), ConfigError,
        MessageMatches(ContainsSubstring("was not collected by the policy being updated")));
  }
  SECTION("a buffer becomes stale once the policy moves") {
    RolloutBuffer buf = make_buffer(params, 2, 2, rng, 1);
    relabel(buf, {clone_policy(params)});
    distill_update(p, opt, buf, cfg, 0.02, 1.0, update_rng);
    CHECK(param_hash(p) != param_hash(params));
    CHECK_THROWS_MATCHES(
        distill_update(p, opt, buf, cfg, 0.02, 1.0, update_rng), ConfigError,
        MessageMatches(ContainsSubstring("was not collected by the policy being updated")));
  }
}

TEST_CASE("the distillation penalty is the weighted mean-square gap to the targets") {
  std::mt19937_64 rng(81);
  const PolicyParams params = init_policy(mini_config(), 10);
  RolloutBuffer buf = make_buffer(params, 3, 3, rng, 1);
  const int total = buf.size();

  // Hand-written targets at a known offset from the policy's own outputs.
  const ActorOut out = actor_forward(params, buf.actor_obs);
  buf.specialist_actions = out.mean + random_matrix(total, params.cfg.action_dim, rng);
  buf.specialist_latents = out.latent + random_matrix(total, params.cfg.latent_dim, rng);
  buf.relabeled = true;
  buf.advantages.setZero();

  const double expected_action =
      (out.mean - buf.specialist_actions).squaredNorm() / (total * params.cfg.action_dim);
  const double expected_latent =
      (out.latent - buf.specialist_latents).squaredNorm() / (total * params.cfg.latent_dim);

  PPOConfig cfg;
  cfg.normalize_advantages = false;
  cfg.entropy_coef = 0.0;
  cfg.value_coef = 0.0;
  cfg.estimation_coef = 0.0;
  const double alpha = 0.3;
  const double beta = 0.7;
  std::vector<int> rows(static_cast<std::size_t>(total));
  std::iota(rows.begin(), rows.end(), 0);
  const LossComponents losses =
      evaluate_minibatch(params, buf, rows, buf.advantages, cfg, alpha, beta, nullptr);

  CHECK(losses.action_match == Catch::Approx(expected_action).margin(1e-12));
  CHECK(losses.latent_match == Catch::Approx(expected_latent).margin(1e-12));
  // Zero advantages silence the surrogate, so the optimized total is exactly
  // the weighted distillation penalty.
  CHECK(losses.surrogate == Catch::Approx(0.0).margin(1e-15));
  CHECK(losses.total ==
        Catch::Approx(alpha * expected_action + beta * expected_latent).margin(1e-12));
}

TEST_CASE("fine-tuning is deterministic and a zero-update request is the identity") {
  fleet::test::TempDir td("distill_reg");
  const Registry reg = two_robot_registry(td);
  const WorldConfig world = quiet_world();
  const PPOConfig ppo = tiny_ppo();
  const PolicyParams start = init_policy(small_config(), 12);

  const PolicyParams same = finetune_specialist(start, reg, world, ppo, 0, 0, 99);
  CHECK(param_hash(same) == param_hash(start));

  const PolicyParams a = finetune_specialist(start, reg, world, ppo, 1, 2, 99);
  const PolicyParams b = finetune_specialist(start, reg, world, ppo, 1, 2, 99);
  const PolicyParams c = finetune_specialist(start, reg, world, ppo, 0, 2, 99);
  CHECK(param_hash(a) != param_hash(start));
  CHECK(param_hash(a) == param_hash(b));
  CHECK(param_hash(a) != param_hash(c));
  CHECK(param_hash(start) == param_hash(init_policy(small_config(), 12)));
}

TEST_CASE("a loop capped at zero rounds returns the initial generalist untouched") {
  fleet::test::TempDir reg_dir("loop0_reg");
  fleet::test::TempDir out("loop0_out");
  const Registry reg = two_robot_registry(reg_dir);
  LoopConfig loop;
  loop.max_rounds = 0;
  loop.distill_epochs = 1;
  loop.specialist_updates = 0;

  const PolicyParams initial = init_policy(small_config(), 13);
  const LoopResult result = run_loop(initial, reg, quiet_world(), tiny_ppo(), loop,
                                     tiny_protocol(), 7, out.path());
  CHECK(result.rounds_run == 0);
  CHECK(result.reports.empty());
  CHECK_FALSE(result.converged);
  CHECK(param_hash(result.generalist) == param_hash(initial));
  CHECK_FALSE(fs::exists(out.path() / "round_1"));
}

TEST_CASE("one loop round writes complete artifacts and a per-epoch trace") {
  fleet::test::TempDir reg_dir("loop1_reg");
  fleet::test::TempDir out("loop1_out");
  const Registry reg = two_robot_registry(reg_dir);
  LoopConfig loop;
  loop.max_rounds = 1;
  loop.distill_epochs = 2;
  loop.specialist_updates = 0;
  loop.improvement_threshold = -1e9;  // never converge, always hit the cap

  const PolicyParams initial = init_policy(small_config(), 14);
  const LoopResult result = run_loop(initial, reg, quiet_world(), tiny_ppo(), loop,
                                     tiny_protocol(), 7, out.path());

  REQUIRE(result.rounds_run == 1);
  REQUIRE(result.reports.size() == 1);
  CHECK_FALSE(result.converged);
  const RoundReport& report = result.reports[0];
  CHECK(report.round == 1);
  REQUIRE(report.specialists.size() == 2);
  CHECK(report.specialists[0].name == "H1surrogate");
  CHECK(report.specialists[1].name == "G1surrogate");
  REQUIRE(report.trace.size() == 2);
  // Without fine-tuning the first epoch's targets are the generalist's own
  // outputs; once the first update moves the generalist the gap opens. Each
  // epoch collects fresh rollouts, otherwise the staleness guard would fire.
  CHECK(report.trace[0].action_match < 1e-24);
  CHECK(report.trace[0].latent_match < 1e-24);
  CHECK(report.trace[1].action_match > 0.0);

  const fs::path round = out.path() / "round_1";
  REQUIRE(fs::is_directory(round));
  CHECK_FALSE(fs::exists(out.path() / "round_1.tmp"));
  CHECK(fs::exists(round / "specialist_H1surrogate.ckpt"));
  CHECK(fs::exists(round / "specialist_G1surrogate.ckpt"));
  REQUIRE(fs::exists(round / "generalist.ckpt"));
  const Checkpoint ckpt = load_checkpoint(round / "generalist.ckpt", reg.hash());
  CHECK(param_hash(ckpt.params) == param_hash(result.generalist));
  CHECK(ckpt.meta.update_idx == 1);

  std::ifstream in(round / "report.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "record,name,metric,value");
}

TEST_CASE("the loop stops once improvement stays below threshold for patience rounds") {
  fleet::test::TempDir reg_dir("loopc_reg");
  fleet::test::TempDir out("loopc_out");
  const Registry reg = two_robot_registry(reg_dir);
  LoopConfig loop;
  loop.max_rounds = 5;
  loop.distill_epochs = 1;
  loop.specialist_updates = 0;
  loop.improvement_threshold = 1e9;  // every round counts as a stall

  SECTION("patience one stops after the first round") {
    loop.patience = 1;
    const LoopResult result = run_loop(init_policy(small_config(), 15), reg, quiet_world(),
                                       tiny_ppo(), loop, tiny_protocol(), 7, out.path());
    CHECK(result.rounds_run == 1);
    CHECK(result.converged);
  }
  SECTION("patience two tolerates one stalled round") {
    loop.patience = 2;
    const LoopResult result = run_loop(init_policy(small_config(), 15), reg, quiet_world(),
                                       tiny_ppo(), loop, tiny_protocol(), 7, out.path());
    CHECK(result.rounds_run == 2);
    CHECK(result.converged);
  }
}

TEST_CASE("a resumed loop continues after the last complete round") {
  fleet::test::TempDir reg_dir("loopr_reg");
  fleet::test::TempDir out("loopr_out");
  const Registry reg = two_robot_registry(reg_dir);
  const WorldConfig world = quiet_world();
  const PPOConfig ppo = tiny_ppo();
  LoopConfig loop;
  loop.distill_epochs = 1;
  loop.specialist_updates = 0;
  loop.improvement_threshold = -1e9;

  const PolicyParams initial = init_policy(small_config(), 16);
  loop.max_rounds = 1;
  const LoopResult first =
      run_loop(initial, reg, world, ppo, loop, tiny_protocol(), 7, out.path());
  REQUIRE(first.rounds_run == 1);

  loop.max_rounds = 2;
  const LoopResult resumed = run_loop(initial, reg, world, ppo, loop, tiny_protocol(), 7,
                                      out.path(), 1.0, /*resume=*/true);
  CHECK(resumed.rounds_run == 2);
  REQUIRE(resumed.reports.size() == 1);
  CHECK(resumed.reports[0].round == 2);
  CHECK(fs::is_directory(out.path() / "round_2"));
  CHECK(param_hash(resumed.generalist) != param_hash(first.generalist));

  // Resuming with everything already done reloads the last artifact as-is.
  loop.max_rounds = 2;
  const LoopResult done = run_loop(initial, reg, world, ppo, loop, tiny_protocol(), 7,
                                   out.path(), 1.0, /*resume=*/true);
  CHECK(done.rounds_run == 2);
  CHECK(done.reports.empty());
  CHECK(param_hash(done.generalist) == param_hash(resumed.generalist));
}
