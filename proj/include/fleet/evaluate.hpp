#pragma once

#include "fleet/policy.hpp"
#include "fleet/world_batch.hpp"

#include <array>
#include <cstdlib>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fleet {

// Exploration-off evaluation settings. In "resampled" mode commands come
// from the finishing ranges on the world's resample schedule; in "held" mode
// a single fixed command is tracked for the whole run.
struct EvalProtocol {
  int n_envs = 256;
  int n_steps = 500;
  std::string command_mode = "resampled";
  // Any embodiment exceeding this fall rate makes the eval subcommand exit
  // nonzero.
  double fall_rate_threshold = 1.0;

  void validate() const {
    if (n_envs < 1) throw ConfigError("eval.n_envs must be >= 1");
    if (n_steps < 0) throw ConfigError("eval.n_steps must be >= 0");
    if (command_mode != "resampled" && command_mode != "held") {
      throw ConfigError("eval.command_mode must be 'resampled' or 'held'");
    }
    if (fall_rate_threshold < 0.0 || fall_rate_threshold > 1.0) {
      throw ConfigError("eval.fall_rate_threshold must be in [0, 1]");
    }
  }
};

struct TrackingRow {
  std::string embodiment;
  // |measured - commanded| episode means, ordered (vx, vy, w, h, p).
  std::array<double, kTrackedCommandDims> error{};
  double fall_rate = 0.0;
};

struct TrackingReport {
  std::vector<TrackingRow> rows;
  int n_envs = 0;
  int n_steps = 0;
  std::uint64_t seed = 0;
  std::string ckpt = "-";
  std::string command_mode = "resampled";
};

// Mean of the locomotion-command errors (vx, vy, yaw rate).
inline double task_command_error(const TrackingRow& row) {
  return (row.error[0] + row.error[1] + row.error[2]) / 3.0;
}

// Uniform mean over embodiments (not env-weighted).
inline double mean_task_command_error(const TrackingReport& report) {
  if (report.rows.empty()) return 0.0;
  double acc = 0.0;
  for (const TrackingRow& r : report.rows) acc += task_command_error(r);
  return acc / static_cast<double>(report.rows.size());
}

// Streaming per-embodiment accumulator for |measured - commanded| samples.
// Separated from the rollout driver so scripted traces can exercise the
// metric directly.
class TrackingAccumulator {
 public:
  void add_env(int spec_id) { bucket(spec_id).envs += 1; }

  void add_step(int spec_id, const std::array<double, kTrackedCommandDims>& abs_error) {
    Bucket& b = bucket(spec_id);
    for (int d = 0; d < kTrackedCommandDims; ++d) b.sum[static_cast<std::size_t>(d)] += abs_error[static_cast<std::size_t>(d)];
    b.steps += 1;
  }

  void add_fall(int spec_id) { bucket(spec_id).falls += 1; }

  // Rows appear in ascending spec-id order; `names` maps spec id to label.
  TrackingReport finalize(const std::vector<std::string>& names) const {
    TrackingReport report;
    for (const auto& [sid, b] : buckets_) {
      TrackingRow row;
      row.embodiment = sid >= 0 && sid < static_cast<int>(names.size())
                           ? names[static_cast<std::size_t>(sid)]
                           : "id" + std::to_string(sid);
      for (int d = 0; d < kTrackedCommandDims; ++d) {
        row.error[static_cast<std::size_t>(d)] =
            b.steps > 0 ? b.sum[static_cast<std::size_t>(d)] / static_cast<double>(b.steps) : 0.0;
      }
      row.fall_rate = b.envs > 0 ? static_cast<double>(b.falls) / static_cast<double>(b.envs) : 0.0;
      report.rows.push_back(std::move(row));
    }
    return report;
  }

 private:
  struct Bucket {
    std::array<double, kTrackedCommandDims> sum{};
    long steps = 0;
    int envs = 0;
    int falls = 0;
  };
  Bucket& bucket(int spec_id) { return buckets_[spec_id]; }

  std::map<int, Bucket> buckets_;
};

// Mean-action rollout of `protocol.n_steps`. Commands are drawn from the
// finishing ranges (curriculum progress 1) unless `fixed_command` holds one
// command for the whole run. Fallen environments stop contributing samples
// from the step they fall; the fall rate is reported per embodiment.
inline TrackingReport evaluate_tracking(const PolicyParams& params, const Registry& registry,
                                        const WorldConfig& world_cfg, const EvalProtocol& protocol,
                                        std::uint64_t seed,
                                        std::optional<CommandVector> fixed_command = std::nullopt,
                                        int single_spec_id = -1, int n_threads = 1,
                                        const std::string& ckpt_id = "-") {
  protocol.validate();
  if (protocol.command_mode == "held" && !fixed_command) {
    throw ConfigError("held-command evaluation requires a fixed command");
  }

  WorldConfig cfg = world_cfg;
  cfg.horizon = protocol.n_steps + 1;  // only falls end episodes mid-eval
  WorldBatch batch(registry, cfg, protocol.n_envs, seed, single_spec_id, fixed_command, n_threads);
  batch.curriculum().progress = 1.0;

  TrackingAccumulator acc;
  std::vector<std::uint8_t> alive(static_cast<std::size_t>(batch.size()), 1);
  for (int e = 0; e < batch.size(); ++e) acc.add_env(batch.spec_id(e));

  Matrix actor_obs, critic_obs;
  std::array<double, kTrackedCommandDims> err{};
  for (int t = 0; t < protocol.n_steps; ++t) {
    batch.observe_all(actor_obs, critic_obs);
    const Matrix mean = actor_forward(params, actor_obs).mean;
    const BatchStep step = batch.step_all(mean, /*auto_reset=*/false);
    for (int e = 0; e < batch.size(); ++e) {
      if (!alive[static_cast<std::size_t>(e)]) continue;
      if (step.fell[static_cast<std::size_t>(e)]) {
        alive[static_cast<std::size_t>(e)] = 0;
        acc.add_fall(batch.spec_id(e));
        continue;
      }
      for (int d = 0; d < kTrackedCommandDims; ++d) err[static_cast<std::size_t>(d)] = step.tracking_abs_error(e, d);
      acc.add_step(batch.spec_id(e), err);
    }
  }

  std::vector<std::string> names;
  for (int i = 0; i < registry.size(); ++i) names.push_back(registry.spec(i).name);
  TrackingReport report = acc.finalize(names);
  report.n_envs = protocol.n_envs;
  report.n_steps = protocol.n_steps;
  report.seed = seed;
  report.ckpt = ckpt_id;
  report.command_mode = fixed_command ? "held" : "resampled";
  return report;
}

// Tracking error with one command dimension held at `value` and all others
// zero. Returns the single-embodiment report.
inline TrackingReport evaluate_single_command(const PolicyParams& params, const Registry& registry,
                                              int spec_id, CommandDim dim, double value,
                                              const WorldConfig& world_cfg,
                                              const EvalProtocol& protocol, std::uint64_t seed,
                                              int n_threads = 1, const std::string& ckpt_id = "-") {
  CommandVector cmd;
  cmd.gait_frequency = 1.5;
  switch (dim) {
    case CommandDim::kVx: cmd.vx = value; break;
    case CommandDim::kVy: cmd.vy = value; break;
    case CommandDim::kYawRate: cmd.yaw_rate = value; break;
    case CommandDim::kHeight: cmd.height_offset = value; break;
    case CommandDim::kPitch: cmd.pitch = value; break;
  }
  EvalProtocol held = protocol;
  held.command_mode = "held";
  return evaluate_tracking(params, registry, world_cfg, held, seed, cmd, spec_id, n_threads,
                           ckpt_id);
}

inline const char* kTrackingReportHeader =
    "embodiment,E_vx,E_vy,E_w,E_h,E_p,fall_rate,n_envs,n_steps,seed,ckpt";

inline std::string serialize_report(const TrackingReport& report) {
  std::string out = kTrackingReportHeader;
  out += "\n";
  for (const TrackingRow& r : report.rows) {
    out += r.embodiment;
    for (int d = 0; d < kTrackedCommandDims; ++d) {
      out += ",";
      out += format_double(r.error[static_cast<std::size_t>(d)]);
    }
    out += "," + format_double(r.fall_rate);
    out += "," + std::to_string(report.n_envs);
    out += "," + std::to_string(report.n_steps);
    out += "," + std::to_string(report.seed);
    out += "," + report.ckpt;
    out += "\n";
  }
  out += "# command_mode=" + report.command_mode + "\n";
  return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  return fields;
}

}  // namespace detail

inline TrackingReport parse_report(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTrackingReportHeader) {
    throw ConfigError("tracking report: missing or unexpected header");
  }
  TrackingReport report;
  bool have_meta = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# command_mode=", 0) == 0) {
      report.command_mode = line.substr(std::string("# command_mode=").size());
      continue;
    }
    const std::vector<std::string> f = detail::split_csv_line(line);
    if (f.size() != 11) throw ConfigError("tracking report: malformed row '" + line + "'");
    TrackingRow row;
    row.embodiment = f[0];
    for (int d = 0; d < kTrackedCommandDims; ++d) {
      row.error[static_cast<std::size_t>(d)] = std::strtod(f[static_cast<std::size_t>(1 + d)].c_str(), nullptr);
    }
    row.fall_rate = std::strtod(f[6].c_str(), nullptr);
    const int n_envs = std::atoi(f[7].c_str());
    const int n_steps = std::atoi(f[8].c_str());
    const std::uint64_t seed = std::strtoull(f[9].c_str(), nullptr, 10);
    if (have_meta && (n_envs != report.n_envs || n_steps != report.n_steps || seed != report.seed ||
                      f[10] != report.ckpt)) {
      throw ConfigError("tracking report: inconsistent metadata across rows");
    }
    report.n_envs = n_envs;
    report.n_steps = n_steps;
    report.seed = seed;
    report.ckpt = f[10];
    have_meta = true;
    report.rows.push_back(std::move(row));
  }
  return report;
}

// Per-metric signed differences (a - b) plus win/loss counts over all
// (embodiment, error-metric) pairs; lower error wins.
struct ReportDiff {
  std::vector<TrackingRow> rows;  // error fields hold a - b
  int wins_a = 0;
  int wins_b = 0;
  int ties = 0;
};

inline ReportDiff compare_reports(const TrackingReport& a, const TrackingReport& b) {
  if (a.n_envs != b.n_envs || a.n_steps != b.n_steps || a.command_mode != b.command_mode) {
    throw ConfigError("compare_reports: protocol metadata differs");
  }
  if (a.rows.size() != b.rows.size()) {
    throw ConfigError("compare_reports: reports cover different embodiment sets");
  }
  ReportDiff diff;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    if (a.rows[i].embodiment != b.rows[i].embodiment) {
      throw ConfigError("compare_reports: embodiment order differs at row " + std::to_string(i));
    }
    TrackingRow row;
    row.embodiment = a.rows[i].embodiment;
    for (std::size_t d = 0; d < kTrackedCommandDims; ++d) {
      const double da = a.rows[i].error[d];
      const double db = b.rows[i].error[d];
      row.error[d] = da - db;
      if (da < db) {
        diff.wins_a += 1;
      } else if (db < da) {
        diff.wins_b += 1;
      } else {
        diff.ties += 1;
      }
    }
    row.fall_rate = a.rows[i].fall_rate - b.rows[i].fall_rate;
    diff.rows.push_back(std::move(row));
  }
  return diff;
}

}  // namespace fleet
