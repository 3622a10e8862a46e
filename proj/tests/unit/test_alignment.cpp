#include "fleet/embodiment.hpp"

#include "test_helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstring>
#include <numeric>
#include <random>

using namespace fleet;

namespace {

// Dense counterparts of the index maps, used only to cross-check them: a full
// 32x32 permutation P (pad columns fill the unclaimed slots in ascending
// order), the selector S, and the padding matrix [I; 0].
struct DenseMaps {
  Matrix P = Matrix::Zero(kUnifiedDim, kUnifiedDim);
  Matrix S;
  Matrix pad;
};

DenseMaps dense_maps(const std::vector<int>& joint_map) {
  const int n = static_cast<int>(joint_map.size());
  DenseMaps d;
  std::vector<bool> claimed(kUnifiedDim, false);
  for (int k = 0; k < n; ++k) {
    d.P(joint_map[static_cast<std::size_t>(k)], k) = 1.0;
    claimed[static_cast<std::size_t>(joint_map[static_cast<std::size_t>(k)])] = true;
  }
  int next = n;
  for (int s = 0; s < kUnifiedDim; ++s) {
    if (!claimed[static_cast<std::size_t>(s)]) d.P(s, next++) = 1.0;
  }
  d.S = Matrix::Zero(n, kUnifiedDim);
  for (int k = 0; k < n; ++k) d.S(k, joint_map[static_cast<std::size_t>(k)]) = 1.0;
  d.pad = Matrix::Zero(kUnifiedDim, n);
  d.pad.topRows(n).setIdentity();
  return d;
}

bool bitwise_equal(const Vector& a, const Vector& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("embed/recover round-trips bit-exactly for every registry robot") {
  const Registry& reg = fleet::test::shipped_registry();
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  for (const EmbodimentSpec& spec : reg.specs()) {
    const SlotPermutation perm = build_permutation(spec.joint_map);
    for (int trial = 0; trial < 200; ++trial) {
      Vector native(spec.n_dofs);
      for (int i = 0; i < native.size(); ++i) native[i] = normal(rng);
      const Vector unified = perm.embed(native);
      REQUIRE(bitwise_equal(perm.recover(unified), native));
    }
  }
}

TEST_CASE("embedding zero-fills unclaimed slots") {
  const Registry& reg = fleet::test::shipped_registry();
  for (const EmbodimentSpec& spec : reg.specs()) {
    const SlotPermutation perm = build_permutation(spec.joint_map);
    const Vector unified = perm.embed(Vector::Ones(spec.n_dofs));
    int claimed = 0;
    for (int s = 0; s < kUnifiedDim; ++s) {
      if (perm.native_of_slot[static_cast<std::size_t>(s)] >= 0) {
        REQUIRE(unified[s] == 1.0);
        ++claimed;
      } else {
        REQUIRE(unified[s] == 0.0);
      }
    }
    REQUIRE(claimed == spec.n_dofs);
  }
}

TEST_CASE("dense selector-permutation product is exactly the identity") {
  const Registry& reg = fleet::test::shipped_registry();
  for (const EmbodimentSpec& spec : reg.specs()) {
    const DenseMaps d = dense_maps(spec.joint_map);
    const Matrix product = d.S * d.P * d.pad;
    REQUIRE(product.isIdentity(0.0));
    // And the dense path agrees with the index path.
    std::mt19937_64 rng(11 + static_cast<unsigned>(spec.id));
    std::normal_distribution<double> normal;
    Vector native(spec.n_dofs);
    for (int i = 0; i < native.size(); ++i) native[i] = normal(rng);
    const SlotPermutation perm = build_permutation(spec.joint_map);
    const Vector dense_unified = d.P * d.pad * native;
    REQUIRE(bitwise_equal(perm.embed(native), dense_unified));
  }
}

TEST_CASE("random joint maps round-trip too") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> slots(kUnifiedDim);
    std::iota(slots.begin(), slots.end(), 0);
    std::shuffle(slots.begin(), slots.end(), rng);
    const int n = 1 + static_cast<int>(rng() % kUnifiedDim);
    std::vector<int> joint_map(slots.begin(), slots.begin() + n);
    const SlotPermutation perm = build_permutation(joint_map);
    std::normal_distribution<double> normal;
    Vector native(n);
    for (int i = 0; i < n; ++i) native[i] = normal(rng);
    REQUIRE(bitwise_equal(perm.recover(perm.embed(native)), native));
    const DenseMaps d = dense_maps(joint_map);
    REQUIRE((d.S * d.P * d.pad).isIdentity(0.0));
  }
}

TEST_CASE("mask zeroes unclaimed slots and keeps claimed ones bitwise") {
  const EmbodimentSpec& spec = fleet::test::shipped_registry().spec(0);
  const SlotPermutation perm = build_permutation(spec.joint_map);
  std::mt19937_64 rng(31);
  std::normal_distribution<double> normal;
  Vector unified(kUnifiedDim);
  for (int i = 0; i < kUnifiedDim; ++i) unified[i] = normal(rng);
  const Vector masked = perm.mask(unified);
  for (int s = 0; s < kUnifiedDim; ++s) {
    if (perm.native_of_slot[static_cast<std::size_t>(s)] >= 0) {
      REQUIRE(masked[s] == unified[s]);
    } else {
      REQUIRE(masked[s] == 0.0);
    }
  }
  REQUIRE(bitwise_equal(perm.mask(masked), masked));
}

TEST_CASE("invalid joint maps are rejected with a clear message") {
  REQUIRE_THROWS_AS(build_permutation({0, 1, 1}), ConfigError);
  REQUIRE_THROWS_AS(build_permutation({0, 32}), ConfigError);
  REQUIRE_THROWS_AS(build_permutation({-1}), ConfigError);
  REQUIRE_THROWS_WITH(build_permutation({5, 5}), Catch::Matchers::ContainsSubstring("slot 5"));
}

TEST_CASE("embed/recover validate input sizes") {
  const EmbodimentSpec& spec = fleet::test::shipped_registry().spec(0);
  REQUIRE_THROWS_AS(embed_action(Vector::Zero(spec.n_dofs + 1), spec), ConfigError);
  REQUIRE_THROWS_AS(recover_action(Vector::Zero(kUnifiedDim - 1), spec), ConfigError);
}
