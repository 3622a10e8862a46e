#pragma once

#include "fleet/core.hpp"
#include "fleet/nn.hpp"

#include <numbers>
#include <random>

namespace fleet {

inline constexpr double kLogStdMin = -4.0;
inline constexpr double kLogStdMax = 1.0;

// Network dimensions. The defaults describe the shipped architecture; tests
// shrink everything to run exhaustive finite-difference checks.
struct NetConfig {
  int proprio_dim = kProprioWindowDim;
  int command_dim = kCommandDim;
  int clock_dim = kClockDim;
  int trunk_hidden = 256;
  int latent_dim = 256;
  int action_dim = kUnifiedDim;
  int oea_dim = kEmbodimentObsDim;
  int privileged_dim = kCriticObsDim;
  int critic_hidden = 256;

  int actor_obs_dim() const { return proprio_dim + command_dim + clock_dim; }
  int head_input_dim() const { return latent_dim + command_dim + clock_dim; }
};

// Actor-critic parameters. The actor is a tanh trunk over the proprioception
// window whose final activation is the latent; a linear action head reads
// [latent, command, clock] and a linear estimation head regresses the
// embodiment feature block from the latent alone. The critic is a separate
// tanh MLP over the privileged observation.
struct PolicyParams {
  NetConfig cfg;
  Mlp trunk;
  LinearLayer action_head;
  LinearLayer estimator_head;
  Vector log_std;
  Mlp critic;
};

inline PolicyParams init_policy(const NetConfig& cfg, std::uint64_t seed) {
  PolicyParams p;
  p.cfg = cfg;
  p.trunk = make_mlp({cfg.proprio_dim, cfg.trunk_hidden, cfg.latent_dim}, true);
  p.action_head = LinearLayer::zeros(cfg.action_dim, cfg.head_input_dim());
  p.estimator_head = LinearLayer::zeros(cfg.oea_dim, cfg.latent_dim);
  p.log_std = Vector::Zero(cfg.action_dim);
  p.critic = make_mlp(
      {cfg.privileged_dim, cfg.critic_hidden, cfg.critic_hidden, cfg.critic_hidden, 1}, false);

  std::mt19937_64 rng(seed);
  orthogonal_init(p.trunk, std::sqrt(2.0), rng);
  orthogonal_init(p.action_head.weight, 0.01, rng);
  p.action_head.bias.setZero();
  orthogonal_init(p.estimator_head.weight, 1.0, rng);
  p.estimator_head.bias.setZero();
  for (std::size_t i = 0; i < p.critic.layers.size(); ++i) {
    const double gain = i + 1 == p.critic.layers.size() ? 1.0 : std::sqrt(2.0);
    orthogonal_init(p.critic.layers[i].weight, gain, rng);
    p.critic.layers[i].bias.setZero();
  }
  return p;
}

inline PolicyParams clone_policy(const PolicyParams& p) { return p; }

// Effective per-dimension standard deviation (log-std clamped to a fixed
// band before exponentiation).
inline Vector action_std(const PolicyParams& p) {
  return p.log_std.array().max(kLogStdMin).min(kLogStdMax).exp();
}

struct ActorCache {
  MlpCache trunk;
  Matrix head_input;
};

struct ActorOut {
  Matrix mean;     // rows: samples
  Matrix latent;   // post-tanh trunk output
  Matrix oea_hat;  // estimated embodiment features
};

// Batched actor pass over full actor observations (proprio window followed by
// command and clock). Pass a cache to enable a later backward call.
inline ActorOut actor_forward(const PolicyParams& p, const Matrix& obs, ActorCache* cache = nullptr) {
  const NetConfig& c = p.cfg;
  if (obs.cols() != c.actor_obs_dim()) {
    throw ConfigError("actor_forward: expected " + std::to_string(c.actor_obs_dim()) +
                      " observation columns, got " + std::to_string(obs.cols()));
  }
  ActorOut out;
  const Matrix proprio = obs.leftCols(c.proprio_dim);
  if (cache) {
    out.latent = mlp_forward(p.trunk, proprio, cache->trunk);
  } else {
    out.latent = mlp_forward(p.trunk, proprio);
  }
  Matrix head_input(obs.rows(), c.head_input_dim());
  head_input.leftCols(c.latent_dim) = out.latent;
  head_input.rightCols(c.command_dim + c.clock_dim) = obs.rightCols(c.command_dim + c.clock_dim);
  out.mean = p.action_head.forward(head_input);
  out.oea_hat = p.estimator_head.forward(out.latent);
  if (cache) cache->head_input = std::move(head_input);
  return out;
}

inline Vector critic_forward(const PolicyParams& p, const Matrix& privileged,
                             MlpCache* cache = nullptr) {
  if (privileged.cols() != p.cfg.privileged_dim) {
    throw ConfigError("critic_forward: expected " + std::to_string(p.cfg.privileged_dim) +
                      " privileged columns, got " + std::to_string(privileged.cols()));
  }
  if (cache) return mlp_forward(p.critic, privileged, *cache).col(0);
  return mlp_forward(p.critic, privileged).col(0);
}

// Diagonal Gaussian log-density of `action` under mean row `mean`.
inline double gaussian_log_prob(const Eigen::Ref<const Vector>& mean,
                                const Eigen::Ref<const Vector>& action, const Vector& sigma) {
  constexpr double log_two_pi = 1.8378770664093454836;  // log(2*pi)
  double lp = 0.0;
  for (int i = 0; i < mean.size(); ++i) {
    const double z = (action[i] - mean[i]) / sigma[i];
    lp += -0.5 * z * z - std::log(sigma[i]) - 0.5 * log_two_pi;
  }
  return lp;
}

inline Vector sample_action(const Eigen::Ref<const Vector>& mean, const Vector& sigma,
                            std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vector a(mean.size());
  for (int i = 0; i < mean.size(); ++i) a[i] = mean[i] + sigma[i] * normal(rng);
  return a;
}

// Entropy of the diagonal Gaussian; shared across samples because the
// log-std is state independent.
inline double policy_entropy(const PolicyParams& p) {
  constexpr double half_log_two_pi_e = 1.4189385332046727418;  // 0.5*log(2*pi*e)
  const Vector clamped = p.log_std.array().max(kLogStdMin).min(kLogStdMax);
  return clamped.sum() + half_log_two_pi_e * static_cast<double>(p.log_std.size());
}

struct PolicyGrads {
  MlpGrads trunk;
  LinearGrad action_head;
  LinearGrad estimator_head;
  Vector log_std;
  MlpGrads critic;
};

inline PolicyGrads make_policy_grads(const PolicyParams& p) {
  PolicyGrads g;
  g.trunk = make_mlp_grads(p.trunk);
  g.action_head.weight = Matrix::Zero(p.action_head.weight.rows(), p.action_head.weight.cols());
  g.action_head.bias = Vector::Zero(p.action_head.bias.size());
  g.estimator_head.weight =
      Matrix::Zero(p.estimator_head.weight.rows(), p.estimator_head.weight.cols());
  g.estimator_head.bias = Vector::Zero(p.estimator_head.bias.size());
  g.log_std = Vector::Zero(p.log_std.size());
  g.critic = make_mlp_grads(p.critic);
  return g;
}

// Accumulates actor-side gradients. `d_mean`, `d_oea` and `d_latent_extra`
// are dL/d(mean), dL/d(oea_hat) and any loss applied directly to the latent;
// all three paths merge before the trunk backward pass.
inline void actor_backward(const PolicyParams& p, const ActorCache& cache, const Matrix& d_mean,
                           const Matrix& d_oea, const Matrix& d_latent_extra, PolicyGrads& grads) {
  const NetConfig& c = p.cfg;
  Matrix d_latent = Matrix::Zero(d_mean.rows(), c.latent_dim);
  if (d_mean.size() > 0) {
    const Matrix d_head_input =
        linear_backward(p.action_head, cache.head_input, d_mean, grads.action_head);
    d_latent += d_head_input.leftCols(c.latent_dim);
  }
  if (d_oea.size() > 0) {
    const Matrix& latent = cache.trunk.outputs.back();
    d_latent += linear_backward(p.estimator_head, latent, d_oea, grads.estimator_head);
  }
  if (d_latent_extra.size() > 0) d_latent += d_latent_extra;
  mlp_backward(p.trunk, cache.trunk, d_latent, grads.trunk);
}

inline void critic_backward(const PolicyParams& p, const MlpCache& cache, const Vector& d_value,
                            PolicyGrads& grads) {
  mlp_backward(p.critic, cache, Matrix(d_value), grads.critic);
}

// --- Tensor visiting -------------------------------------------------------
// All traversals list tensors in one fixed order: trunk layers, action head,
// estimator head, log_std, critic layers; weight before bias.

template <class ParamsLike, class F>
void visit_tensors(ParamsLike& p, F&& f) {
  for (auto& l : p.trunk.layers) {
    f(l.weight);
    f(l.bias);
  }
  f(p.action_head.weight);
  f(p.action_head.bias);
  f(p.estimator_head.weight);
  f(p.estimator_head.bias);
  f(p.log_std);
  for (auto& l : p.critic.layers) {
    f(l.weight);
    f(l.bias);
  }
}

template <class A, class B, class C, class D, class F>
void zip_tensors(A& a, B& b, C& c, D& d, F&& f) {
  for (std::size_t i = 0; i < a.trunk.layers.size(); ++i) {
    f(a.trunk.layers[i].weight, b.trunk.layers[i].weight, c.trunk.layers[i].weight,
      d.trunk.layers[i].weight);
    f(a.trunk.layers[i].bias, b.trunk.layers[i].bias, c.trunk.layers[i].bias,
      d.trunk.layers[i].bias);
  }
  f(a.action_head.weight, b.action_head.weight, c.action_head.weight, d.action_head.weight);
  f(a.action_head.bias, b.action_head.bias, c.action_head.bias, d.action_head.bias);
  f(a.estimator_head.weight, b.estimator_head.weight, c.estimator_head.weight,
    d.estimator_head.weight);
  f(a.estimator_head.bias, b.estimator_head.bias, c.estimator_head.bias, d.estimator_head.bias);
  f(a.log_std, b.log_std, c.log_std, d.log_std);
  for (std::size_t i = 0; i < a.critic.layers.size(); ++i) {
    f(a.critic.layers[i].weight, b.critic.layers[i].weight, c.critic.layers[i].weight,
      d.critic.layers[i].weight);
    f(a.critic.layers[i].bias, b.critic.layers[i].bias, c.critic.layers[i].bias,
      d.critic.layers[i].bias);
  }
}

inline void zero_grads(PolicyGrads& g) {
  visit_tensors(g, [](auto& t) { t.setZero(); });
}

inline bool grads_finite(const PolicyGrads& g, std::string* offender = nullptr) {
  bool ok = true;
  int index = 0;
  visit_tensors(const_cast<PolicyGrads&>(g), [&](auto& t) {
    if (!t.allFinite() && ok) {
      ok = false;
      if (offender) *offender = "tensor " + std::to_string(index);
    }
    ++index;
  });
  return ok;
}

struct AdamState {
  PolicyGrads m;
  PolicyGrads v;
  long t = 0;
};

inline AdamState make_adam_state(const PolicyParams& p) {
  AdamState s;
  s.m = make_policy_grads(p);
  s.v = make_policy_grads(p);
  return s;
}

inline void apply_adam(PolicyParams& params, const PolicyGrads& grads, AdamState& state,
                       const AdamConfig& cfg) {
  state.t += 1;
  const long t = state.t;
  zip_tensors(params, const_cast<PolicyGrads&>(grads), state.m, state.v,
              [&](auto& p, auto& g, auto& m, auto& v) { adam_update_tensor(p, g, m, v, cfg, t); });
}

inline int param_count(const PolicyParams& p) {
  long n = 0;
  visit_tensors(const_cast<PolicyParams&>(p), [&](auto& t) { n += t.size(); });
  return static_cast<int>(n);
}

inline Vector flatten_params(const PolicyParams& p) {
  Vector out(param_count(p));
  long at = 0;
  visit_tensors(const_cast<PolicyParams&>(p), [&](auto& t) {
    out.segment(at, t.size()) = Eigen::Map<const Vector>(t.data(), t.size());
    at += t.size();
  });
  return out;
}

inline void set_flat_params(PolicyParams& p, const Vector& flat) {
  long at = 0;
  visit_tensors(p, [&](auto& t) {
    Eigen::Map<Vector>(t.data(), t.size()) = flat.segment(at, t.size());
    at += t.size();
  });
  if (at != flat.size()) throw ConfigError("set_flat_params: size mismatch");
}

inline Vector flatten_grads(const PolicyGrads& g) {
  long n = 0;
  visit_tensors(const_cast<PolicyGrads&>(g), [&](auto& t) { n += t.size(); });
  Vector out(n);
  long at = 0;
  visit_tensors(const_cast<PolicyGrads&>(g), [&](auto& t) {
    out.segment(at, t.size()) = Eigen::Map<const Vector>(t.data(), t.size());
    at += t.size();
  });
  return out;
}

// Content hash of all parameters; used to tag rollout provenance and for
// cheap equality checks in tests.
inline std::uint64_t param_hash(const PolicyParams& p) {
  std::uint64_t h = kFnvOffset;
  visit_tensors(const_cast<PolicyParams&>(p), [&](auto& t) {
    h = fnv1a(t.data(), sizeof(double) * static_cast<std::size_t>(t.size()), h);
  });
  return h;
}

}  // namespace fleet
