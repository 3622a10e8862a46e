#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace fleet {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Unified joint-slot layout shared by every embodiment.
inline constexpr int kUnifiedDim = 32;
// Rigid bodies described per embodiment: torso, left foot, right foot.
inline constexpr int kBodyCount = 3;
// Per-body features: mass(1) + CoM(3) + inertia upper triangle(6).
inline constexpr int kBodyFeatureDim = 10;
inline constexpr int kEmbodimentObsDim = kBodyCount * kBodyFeatureDim;
// Command layout: vx, vy, yaw rate, height offset, pitch, gait frequency.
inline constexpr int kCommandDim = 6;
inline constexpr int kClockDim = 2;
// Proprioception window length (frames).
inline constexpr int kProprioFrames = 5;
// One proprio frame: q(32) + qd(32) + base angular velocity(3) + projected gravity(3).
inline constexpr int kProprioFrameDim = 2 * kUnifiedDim + 3 + 3;
inline constexpr int kProprioWindowDim = kProprioFrames * kProprioFrameDim;
inline constexpr int kActorObsDim = kProprioWindowDim + kCommandDim + kClockDim;
// Privileged extras: lin vel(3), height err(1), foot clearance(2), contact
// forces(2), collision flag(1), friction(1), height scan(9), o_ea(30).
inline constexpr int kHeightScanDim = 9;
inline constexpr int kPrivilegedExtraDim = 3 + 1 + 2 + 2 + 1 + 1 + kHeightScanDim + kEmbodimentObsDim;
inline constexpr int kCriticObsDim = kActorObsDim + kPrivilegedExtraDim;

inline constexpr int kFeetCount = 2;

// Configuration / input validation problems (CLI exit code 1).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values encountered during numerics (CLI exit code 2).
struct NumericsError : std::runtime_error {
  explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

inline double frac(double x) { return x - std::floor(x); }

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Exponential tracking kernel exp(-x / kappa).
inline double tracking_kernel(double x, double kappa) { return std::exp(-x / kappa); }

inline double square(double x) { return x * x; }

// Round-trip-exact decimal form of a double; the one format used by every
// CSV and text artifact this library writes.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// splitmix64; used to derive per-instance seeds from (global seed, index).
inline std::uint64_t split_mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t index) {
  return split_mix64(split_mix64(global_seed) ^ (0x9e3779b97f4a7c15ull * (index + 1)));
}

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = kFnvOffset) {
  return fnv1a(s.data(), s.size(), h);
}

}  // namespace fleet
