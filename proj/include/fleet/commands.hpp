#pragma once

#include "fleet/core.hpp"

#include <array>
#include <random>
#include <string>

namespace fleet {

// Velocity / posture command tracked by the policy, plus the stepping
// frequency that drives the gait clock.
struct CommandVector {
  double vx = 0.0;            // m/s, base frame
  double vy = 0.0;            // m/s, base frame
  double yaw_rate = 0.0;      // rad/s
  double height_offset = 0.0; // m, relative to nominal base height
  double pitch = 0.0;         // rad
  double gait_frequency = 1.5;  // Hz

  Vector as_vector() const {
    Vector v(kCommandDim);
    v << vx, vy, yaw_rate, height_offset, pitch, gait_frequency;
    return v;
  }
};

// The five tracked command dimensions (gait frequency is sampled from a fixed
// range and is not curriculum-scheduled).
enum class CommandDim { kVx = 0, kVy, kYawRate, kHeight, kPitch };
inline constexpr int kTrackedCommandDims = 5;

inline const char* command_dim_name(CommandDim d) {
  switch (d) {
    case CommandDim::kVx: return "vx";
    case CommandDim::kVy: return "vy";
    case CommandDim::kYawRate: return "w";
    case CommandDim::kHeight: return "h";
    case CommandDim::kPitch: return "p";
  }
  return "?";
}

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// Sampling ranges per command dimension at curriculum start and end. The
// linear-velocity and yaw ranges widen over the curriculum, lateral velocity
// narrows slightly, and the posture ranges stay fixed.
struct CommandTable {
  std::array<Range, kTrackedCommandDims> initial{
      Range{-0.3, 0.6},  // vx
      Range{-0.5, 0.5},  // vy
      Range{-0.5, 0.5},  // yaw rate
      Range{-0.3, 0.0},  // height offset
      Range{-0.3, 0.5},  // pitch
  };
  std::array<Range, kTrackedCommandDims> finishing{
      Range{-0.6, 1.2},
      Range{-0.4, 0.4},
      Range{-1.0, 1.0},
      Range{-0.3, 0.0},
      Range{-0.3, 0.5},
  };
  Range gait_frequency{1.0, 2.5};
};

// Curriculum progress in [0, 1]; ranges interpolate linearly between the
// initial and finishing endpoints.
struct CurriculumState {
  double progress = 0.0;
};

inline Range current_range(const CommandTable& table, CommandDim dim, double progress) {
  if (progress < 0.0 || progress > 1.0) {
    throw ConfigError("curriculum progress " + std::to_string(progress) + " outside [0, 1]");
  }
  const auto& a = table.initial[static_cast<int>(dim)];
  const auto& b = table.finishing[static_cast<int>(dim)];
  return Range{a.lo + (b.lo - a.lo) * progress, a.hi + (b.hi - a.hi) * progress};
}

// Uniform draw from every current range. Draw order is fixed (vx, vy, yaw,
// height, pitch, frequency) so trajectories are reproducible per seed.
inline CommandVector sample_command(const CommandTable& table, const CurriculumState& cur,
                                    std::mt19937_64& rng) {
  auto draw = [&rng](const Range& r) {
    std::uniform_real_distribution<double> d(r.lo, r.hi);
    return d(rng);
  };
  CommandVector c;
  c.vx = draw(current_range(table, CommandDim::kVx, cur.progress));
  c.vy = draw(current_range(table, CommandDim::kVy, cur.progress));
  c.yaw_rate = draw(current_range(table, CommandDim::kYawRate, cur.progress));
  c.height_offset = draw(current_range(table, CommandDim::kHeight, cur.progress));
  c.pitch = draw(current_range(table, CommandDim::kPitch, cur.progress));
  c.gait_frequency = draw(table.gait_frequency);
  return c;
}

}  // namespace fleet
