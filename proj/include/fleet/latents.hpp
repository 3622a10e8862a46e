#pragma once

#include "fleet/policy.hpp"
#include "fleet/world_batch.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

namespace fleet {

// Per-step trunk latents collected while every embodiment walks forward
// under the same held command, plus a variance-maximizing 2-D projection
// fit on the dump itself. Raw latents are always kept so external tools
// can run their own embeddings.
struct LatentDump {
  std::vector<int> embodiment_ids;       // one entry per row
  std::vector<int> steps;                // one entry per row
  Matrix latents;                        // rows x latent_dim
  Matrix projection;                     // rows x 2
  std::vector<std::string> names;        // spec id -> label
};

namespace detail {

// Top-2 principal directions of the centered rows. Signs are fixed so the
// coordinate with the largest absolute loading is positive, making the
// projection deterministic across eigensolver conventions.
inline Matrix pca_project_2d(const Matrix& rows) {
  Matrix proj = Matrix::Zero(rows.rows(), 2);
  if (rows.rows() < 2) return proj;
  const Matrix centered = rows.rowwise() - rows.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(rows.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw NumericsError("latent projection: eigendecomposition failed");
  }
  const Eigen::Index last = cov.cols() - 1;
  for (int k = 0; k < 2 && k <= last; ++k) {
    Vector axis = solver.eigenvectors().col(last - k);
    Eigen::Index imax = 0;
    axis.cwiseAbs().maxCoeff(&imax);
    if (axis(imax) < 0.0) axis = -axis;
    proj.col(k) = centered * axis;
  }
  return proj;
}

}  // namespace detail

// Mean-action rollout of one environment per embodiment under a held
// forward-walk command, recording the trunk latent at every step.
inline LatentDump dump_latents(const PolicyParams& params, const Registry& registry,
                               const WorldConfig& world_cfg, int n_steps, std::uint64_t seed,
                               double forward_speed = 0.5) {
  if (n_steps < 0) throw ConfigError("dump_latents: n_steps must be >= 0");
  CommandVector cmd;
  cmd.vx = forward_speed;
  cmd.gait_frequency = 1.5;

  LatentDump dump;
  for (int i = 0; i < registry.size(); ++i) dump.names.push_back(registry.spec(i).name);
  const int n_envs = registry.size();
  dump.latents.resize(static_cast<Eigen::Index>(n_envs) * n_steps, params.cfg.latent_dim);
  dump.embodiment_ids.reserve(static_cast<std::size_t>(n_envs) * static_cast<std::size_t>(n_steps));
  dump.steps.reserve(dump.embodiment_ids.capacity());
  if (n_steps == 0) {
    dump.projection.resize(0, 2);
    return dump;
  }

  WorldConfig cfg = world_cfg;
  cfg.horizon = n_steps + 1;
  WorldBatch batch(registry, cfg, n_envs, seed, -1, cmd);
  batch.curriculum().progress = 1.0;

  Matrix actor_obs, critic_obs;
  Eigen::Index row = 0;
  for (int t = 0; t < n_steps; ++t) {
    batch.observe_all(actor_obs, critic_obs);
    const ActorOut out = actor_forward(params, actor_obs);
    for (int e = 0; e < n_envs; ++e) {
      dump.latents.row(row) = out.latent.row(e);
      dump.embodiment_ids.push_back(batch.spec_id(e));
      dump.steps.push_back(t);
      ++row;
    }
    batch.step_all(out.mean, /*auto_reset=*/true);
  }
  dump.projection = detail::pca_project_2d(dump.latents);
  return dump;
}

inline std::string serialize_latents(const LatentDump& dump) {
  std::string out = "embodiment,step";
  for (Eigen::Index d = 0; d < dump.latents.cols(); ++d) out += ",z" + std::to_string(d);
  out += ",p0,p1\n";
  for (Eigen::Index r = 0; r < dump.latents.rows(); ++r) {
    const int sid = dump.embodiment_ids[static_cast<std::size_t>(r)];
    out += sid >= 0 && sid < static_cast<int>(dump.names.size())
               ? dump.names[static_cast<std::size_t>(sid)]
               : "id" + std::to_string(sid);
    out += "," + std::to_string(dump.steps[static_cast<std::size_t>(r)]);
    for (Eigen::Index d = 0; d < dump.latents.cols(); ++d) {
      out += "," + format_double(dump.latents(r, d));
    }
    out += "," + format_double(dump.projection(r, 0));
    out += "," + format_double(dump.projection(r, 1));
    out += "\n";
  }
  return out;
}

// Mean silhouette coefficient over all points with Euclidean distances.
// Singleton clusters score 0 by convention.
inline double silhouette_score(const Matrix& points, const std::vector<int>& labels) {
  const Eigen::Index n = points.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw ConfigError("silhouette_score: one label per row required");
  }
  std::vector<int> distinct = labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 2) {
    throw ConfigError("silhouette_score: needs at least two clusters");
  }

  std::vector<long> counts(distinct.size(), 0);
  std::vector<int> cluster_of(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto it = std::lower_bound(distinct.begin(), distinct.end(),
                                     labels[static_cast<std::size_t>(i)]);
    cluster_of[static_cast<std::size_t>(i)] = static_cast<int>(it - distinct.begin());
    counts[static_cast<std::size_t>(cluster_of[static_cast<std::size_t>(i)])] += 1;
  }

  double total = 0.0;
  std::vector<double> mean_dist(distinct.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(mean_dist.begin(), mean_dist.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = (points.row(i) - points.row(j)).norm();
      mean_dist[static_cast<std::size_t>(cluster_of[static_cast<std::size_t>(j)])] += d;
    }
    const int ci = cluster_of[static_cast<std::size_t>(i)];
    const long own = counts[static_cast<std::size_t>(ci)];
    if (own <= 1) continue;  // singleton contributes 0
    const double a = mean_dist[static_cast<std::size_t>(ci)] / static_cast<double>(own - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < distinct.size(); ++c) {
      if (static_cast<int>(c) == ci || counts[c] == 0) continue;
      b = std::min(b, mean_dist[c] / static_cast<double>(counts[c]));
    }
    const double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(n);
}

inline double silhouette_score(const LatentDump& dump) {
  return silhouette_score(dump.latents, dump.embodiment_ids);
}

}  // namespace fleet
