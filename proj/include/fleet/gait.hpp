#pragma once

#include "fleet/core.hpp"

#include <numbers>

namespace fleet {

// Two-leg gait clock. phi2 trails phi1 by a fixed phase offset; both live in
// [0, 1) and advance together at the commanded stepping frequency.
struct GaitState {
  double phi1 = 0.0;
  double phi2 = 0.0;
  double phase_offset = 0.5;
  double frequency = 1.5;  // Hz
};

inline GaitState make_gait(double phase_offset, double frequency) {
  GaitState g;
  g.phase_offset = phase_offset;
  g.frequency = frequency;
  g.phi1 = 0.0;
  g.phi2 = frac(g.phase_offset);
  return g;
}

inline void advance_gait_clock(GaitState& g, double dt) {
  g.phi1 = frac(g.phi1 + g.frequency * dt);
  g.phi2 = frac(g.phi1 + g.phase_offset);
}

// Smooth stance indicator: ~1 for phase in the first half of the cycle, ~0 in
// the second half, with logistic transitions of width 0.02.
inline double contact_schedule(double phi) {
  const double p = frac(phi);
  return logistic((0.5 - p) / 0.02) * logistic(p / 0.02);
}

inline Eigen::Vector2d clock_features(const GaitState& g) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  return {std::sin(two_pi * g.phi1), std::sin(two_pi * g.phi2)};
}

}  // namespace fleet
