#pragma once

#include "fleet/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace fleet {

struct PPOConfig {
  double gamma = 0.99;
  double lam = 0.95;
  double clip_eps = 0.2;
  double entropy_coef = 0.005;
  double value_coef = 0.5;
  double estimation_coef = 0.5;
  AdamConfig adam{};  // lr lives here
  int epochs = 5;
  int minibatch_size = 4096;
  int horizon = 24;
  int n_envs = 500;
  bool normalize_advantages = true;
  // Global gradient-norm clip; <= 0 disables.
  double max_grad_norm = 1.0;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("ppo: gamma must be in (0, 1)");
    if (lam < 0.0 || lam > 1.0) throw ConfigError("ppo: lam must be in [0, 1]");
    if (clip_eps <= 0.0) throw ConfigError("ppo: clip_eps must be positive");
    if (epochs < 1) throw ConfigError("ppo: epochs must be >= 1");
    if (horizon < 1) throw ConfigError("ppo: horizon must be >= 1");
    if (n_envs < 1) throw ConfigError("ppo: n_envs must be >= 1");
  }
};

// Unweighted loss components of one minibatch (or their mean over an update).
// `total` is the optimized objective: surrogate - entropy_coef*entropy
// + value_coef*value + estimation_coef*estimation + alpha*action_match
// + beta*latent_match.
struct LossComponents {
  double surrogate = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double estimation = 0.0;
  double action_match = 0.0;
  double latent_match = 0.0;
  double total = 0.0;
};

struct LossReport {
  LossComponents mean;
  std::vector<LossComponents> trace;  // one entry per minibatch step, in order
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  int minibatches = 0;
};

inline bool loss_trace_equal(const LossReport& a, const LossReport& b) {
  if (a.trace.size() != b.trace.size()) return false;
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    const LossComponents& x = a.trace[i];
    const LossComponents& y = b.trace[i];
    if (x.surrogate != y.surrogate || x.value != y.value || x.entropy != y.entropy ||
        x.estimation != y.estimation || x.action_match != y.action_match ||
        x.latent_match != y.latent_match || x.total != y.total) {
      return false;
    }
  }
  return true;
}

namespace detail {

inline void check_finite_loss(double value, const char* component) {
  if (!std::isfinite(value)) {
    throw NumericsError(std::string("non-finite ") + component + " loss in policy update");
  }
}

}  // namespace detail

// Loss and gradients for one set of buffer rows. `advantages` must be indexed
// like the buffer (already normalized if desired). When alpha or beta is
// nonzero the buffer must carry specialist targets. Gradients accumulate into
// `grads` when provided; `kl_out`/`clip_out` receive diagnostics when given.
inline LossComponents evaluate_minibatch(const PolicyParams& params, const RolloutBuffer& buf,
                                         const std::vector<int>& rows, const Vector& advantages,
                                         const PPOConfig& cfg, double alpha, double beta,
                                         PolicyGrads* grads, double* kl_out = nullptr,
                                         double* clip_out = nullptr) {
  if (rows.empty()) throw ConfigError("evaluate_minibatch: empty row set");
  const int m = static_cast<int>(rows.size());
  const int action_dim = params.cfg.action_dim;
  const int oea_dim = params.cfg.oea_dim;
  const int latent_dim = params.cfg.latent_dim;

  Matrix obs(m, buf.actor_obs.cols());
  Matrix priv(m, buf.privileged_obs.cols());
  Matrix acts(m, action_dim);
  Vector old_lp(m), adv(m), ret(m);
  for (int i = 0; i < m; ++i) {
    const int r = rows[static_cast<std::size_t>(i)];
    obs.row(i) = buf.actor_obs.row(r);
    priv.row(i) = buf.privileged_obs.row(r);
    acts.row(i) = buf.actions.row(r);
    old_lp[i] = buf.log_probs[r];
    adv[i] = advantages[r];
    ret[i] = buf.returns[r];
  }

  ActorCache actor_cache;
  MlpCache critic_cache;
  const ActorOut actor = actor_forward(params, obs, &actor_cache);
  const Vector values = critic_forward(params, priv, &critic_cache);

  const Vector sigma = action_std(params);
  Vector inside(params.cfg.action_dim);
  for (int j = 0; j < action_dim; ++j) {
    inside[j] =
        (params.log_std[j] > kLogStdMin && params.log_std[j] < kLogStdMax) ? 1.0 : 0.0;
  }

  // Clipped surrogate.
  const Matrix z =
      ((acts - actor.mean).array().rowwise() / sigma.transpose().array()).matrix();
  constexpr double log_two_pi = 1.8378770664093454836;
  const double log_norm = sigma.array().log().sum() + 0.5 * log_two_pi * action_dim;
  Vector new_lp(m);
  for (int i = 0; i < m; ++i) {
    new_lp[i] = -0.5 * z.row(i).squaredNorm() - log_norm;
  }
  const Vector ratio = (new_lp - old_lp).array().exp();
  const double lo = 1.0 - cfg.clip_eps;
  const double hi = 1.0 + cfg.clip_eps;
  double surrogate = 0.0;
  double kl = 0.0;
  int clipped_count = 0;
  Vector d_lp = Vector::Zero(m);  // dL/d new_lp per sample
  for (int i = 0; i < m; ++i) {
    const double r = ratio[i];
    const double surr1 = r * adv[i];
    const double surr2 = std::clamp(r, lo, hi) * adv[i];
    surrogate += -std::min(surr1, surr2);
    double d_ratio = 0.0;
    if (surr1 <= surr2) {
      d_ratio = adv[i];
    } else if (r > lo && r < hi) {
      d_ratio = adv[i];
    }
    d_lp[i] = -d_ratio * r / m;
    kl += (r - 1.0) - std::log(r);
    clipped_count += (r < lo || r > hi) ? 1 : 0;
  }
  surrogate /= m;

  // Value regression against GAE returns.
  const Vector v_err = values - ret;
  const double value_loss = v_err.squaredNorm() / m;

  const double entropy = policy_entropy(params);

  // The actor estimates the embodiment features the critic sees; the target
  // is the trailing block of the privileged observation.
  double estimation = 0.0;
  Matrix d_oea;
  if (cfg.estimation_coef > 0.0) {
    const Matrix oea_err = actor.oea_hat - priv.rightCols(oea_dim);
    estimation = oea_err.squaredNorm() / (static_cast<double>(m) * oea_dim);
    d_oea = (2.0 * cfg.estimation_coef / (static_cast<double>(m) * oea_dim)) * oea_err;
  }

  double action_match = 0.0;
  double latent_match = 0.0;
  Matrix d_mean_extra;
  Matrix d_latent_extra;
  if (alpha > 0.0 || beta > 0.0) {
    if (!buf.relabeled) {
      throw ConfigError("distillation losses require a relabeled rollout buffer");
    }
    Matrix a_s(m, action_dim), e_s(m, latent_dim);
    for (int i = 0; i < m; ++i) {
      const int r = rows[static_cast<std::size_t>(i)];
      a_s.row(i) = buf.specialist_actions.row(r);
      e_s.row(i) = buf.specialist_latents.row(r);
    }
    const Matrix a_err = actor.mean - a_s;
    const Matrix e_err = actor.latent - e_s;
    action_match = a_err.squaredNorm() / (static_cast<double>(m) * action_dim);
    latent_match = e_err.squaredNorm() / (static_cast<double>(m) * latent_dim);
    if (alpha > 0.0) {
      d_mean_extra = (2.0 * alpha / (static_cast<double>(m) * action_dim)) * a_err;
    }
    if (beta > 0.0) {
      d_latent_extra = (2.0 * beta / (static_cast<double>(m) * latent_dim)) * e_err;
    }
  }

  LossComponents out;
  out.surrogate = surrogate;
  out.value = value_loss;
  out.entropy = entropy;
  out.estimation = estimation;
  out.action_match = action_match;
  out.latent_match = latent_match;
  out.total = surrogate - cfg.entropy_coef * entropy + cfg.value_coef * value_loss +
              cfg.estimation_coef * estimation + alpha * action_match + beta * latent_match;
  detail::check_finite_loss(out.surrogate, "surrogate");
  detail::check_finite_loss(out.value, "value");
  detail::check_finite_loss(out.entropy, "entropy");
  detail::check_finite_loss(out.estimation, "estimation");
  detail::check_finite_loss(out.action_match, "action-match");
  detail::check_finite_loss(out.latent_match, "latent-match");
  if (kl_out) *kl_out = kl / m;
  if (clip_out) *clip_out = static_cast<double>(clipped_count) / m;

  if (grads) {
    // dlogp/dmean = z/sigma, dlogp/dlog_std = z^2 - 1 (zero where clamped).
    Matrix d_mean =
        ((z.array().rowwise() / sigma.transpose().array()).colwise() * d_lp.array()).matrix();
    for (int j = 0; j < action_dim; ++j) {
      double g = 0.0;
      for (int i = 0; i < m; ++i) g += d_lp[i] * (z(i, j) * z(i, j) - 1.0);
      g += -cfg.entropy_coef;  // entropy bonus, dH/dlog_std = 1 inside the clamp
      grads->log_std[j] += g * inside[j];
    }
    if (d_mean_extra.size() > 0) d_mean += d_mean_extra;
    actor_backward(params, actor_cache, d_mean, d_oea, d_latent_extra, *grads);
    const Vector d_value = (2.0 * cfg.value_coef / m) * v_err;
    critic_backward(params, critic_cache, d_value, *grads);
  }
  return out;
}

namespace detail {

inline double grad_global_norm(const PolicyGrads& g) {
  double sumsq = 0.0;
  visit_tensors(const_cast<PolicyGrads&>(g), [&](auto& t) { sumsq += t.squaredNorm(); });
  return std::sqrt(sumsq);
}

inline void scale_grads(PolicyGrads& g, double s) {
  visit_tensors(g, [s](auto& t) { t *= s; });
}

// Shared minibatch-update driver. ppo_update and distill_update differ only
// in the alpha/beta weights, so identical seeding gives identical traces.
inline LossReport update_policy(PolicyParams& params, AdamState& opt, const RolloutBuffer& buf,
                                const PPOConfig& cfg, double alpha, double beta,
                                std::mt19937_64& rng) {
  cfg.validate();
  if (buf.advantages.size() != buf.size()) {
    throw ConfigError("policy update requires a buffer with computed advantages");
  }
  if (buf.relabeled) {
    // Relabeled targets are only valid for states the policy being updated
    // produced itself; a stale buffer would silently break that property.
    const std::uint64_t expected = param_hash(params);
    for (std::size_t i = 0; i < buf.provenance.size(); ++i) {
      if (buf.provenance[i] != expected) {
        throw ConfigError("relabeled buffer row " + std::to_string(i) +
                          " was not collected by the policy being updated");
      }
    }
  }

  Vector adv = buf.advantages;
  if (cfg.normalize_advantages) {
    const double mean = adv.mean();
    const double var = (adv.array() - mean).square().sum() / adv.size();
    adv = (adv.array() - mean) / (std::sqrt(var) + 1e-8);
  }

  const int total = buf.size();
  const int mb = cfg.minibatch_size > 0 ? std::min(cfg.minibatch_size, total) : total;
  std::vector<int> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);

  PolicyGrads grads = make_policy_grads(params);
  LossReport report;
  double kl_sum = 0.0;
  double clip_sum = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < total; start += mb) {
      const int count = std::min(mb, total - start);
      const std::vector<int> rows(order.begin() + start, order.begin() + start + count);
      zero_grads(grads);
      double kl = 0.0, clip = 0.0;
      const LossComponents losses =
          evaluate_minibatch(params, buf, rows, adv, cfg, alpha, beta, &grads, &kl, &clip);
      std::string offender;
      if (!grads_finite(grads, &offender)) {
        throw NumericsError("non-finite gradient in policy update (" + offender + ")");
      }
      if (cfg.max_grad_norm > 0.0) {
        const double norm = grad_global_norm(grads);
        if (norm > cfg.max_grad_norm) scale_grads(grads, cfg.max_grad_norm / norm);
      }
      apply_adam(params, grads, opt, cfg.adam);
      report.trace.push_back(losses);
      kl_sum += kl;
      clip_sum += clip;
      report.mean.surrogate += losses.surrogate;
      report.mean.value += losses.value;
      report.mean.entropy += losses.entropy;
      report.mean.estimation += losses.estimation;
      report.mean.action_match += losses.action_match;
      report.mean.latent_match += losses.latent_match;
      report.mean.total += losses.total;
    }
  }
  report.minibatches = static_cast<int>(report.trace.size());
  const double n = std::max(1, report.minibatches);
  report.mean.surrogate /= n;
  report.mean.value /= n;
  report.mean.entropy /= n;
  report.mean.estimation /= n;
  report.mean.action_match /= n;
  report.mean.latent_match /= n;
  report.mean.total /= n;
  report.approx_kl = kl_sum / n;
  report.clip_fraction = clip_sum / n;
  return report;
}

}  // namespace detail

inline LossReport ppo_update(PolicyParams& params, AdamState& opt, const RolloutBuffer& buf,
                             const PPOConfig& cfg, std::mt19937_64& rng) {
  return detail::update_policy(params, opt, buf, cfg, 0.0, 0.0, rng);
}

}  // namespace fleet
