#pragma once

#include "fleet/policy.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace fleet {

// Run bookkeeping stored alongside the parameters so training can resume
// with a continuous update counter and the curriculum where it left off.
struct CheckpointMeta {
  std::uint64_t registry_hash = 0;
  std::uint64_t seed = 0;
  std::int64_t update_idx = 0;
  double curriculum_progress = 0.0;
};

struct Checkpoint {
  PolicyParams params;
  std::optional<AdamState> adam;
  CheckpointMeta meta;
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'F', 'L', 'E', 'E', 'T', 'C', 'K', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Canonical tensor names in visit_tensors order; the file stores them so a
// reader can diagnose ordering or architecture drift precisely.
inline std::vector<std::string> tensor_names(const PolicyParams& p) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < p.trunk.layers.size(); ++i) {
    names.push_back("trunk." + std::to_string(i) + ".weight");
    names.push_back("trunk." + std::to_string(i) + ".bias");
  }
  names.push_back("action_head.weight");
  names.push_back("action_head.bias");
  names.push_back("estimator_head.weight");
  names.push_back("estimator_head.bias");
  names.push_back("log_std");
  for (std::size_t i = 0; i < p.critic.layers.size(); ++i) {
    names.push_back("critic." + std::to_string(i) + ".weight");
    names.push_back("critic." + std::to_string(i) + ".bias");
  }
  return names;
}

struct ByteWriter {
  std::string buf;

  void bytes(const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void i64(std::int64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
};

struct ByteReader {
  const std::string& buf;
  std::size_t at = 0;

  void bytes(void* p, std::size_t n) {
    if (at + n > buf.size()) throw ConfigError("corrupt checkpoint: truncated file");
    std::memcpy(p, buf.data() + at, n);
    at += n;
  }
  std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
  std::int64_t i64() { std::int64_t v; bytes(&v, 8); return v; }
  double f64() { double v; bytes(&v, 8); return v; }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 20)) throw ConfigError("corrupt checkpoint: oversized string");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
};

template <class ParamsLike>
void write_tensor_block(ByteWriter& w, ParamsLike& p, const std::vector<std::string>& names) {
  std::size_t idx = 0;
  visit_tensors(p, [&](auto& t) {
    w.str(names[idx++]);
    w.i64(t.rows());
    w.i64(t.cols());
    w.bytes(t.data(), sizeof(double) * static_cast<std::size_t>(t.size()));
  });
}

template <class ParamsLike>
void read_tensor_block(ByteReader& r, ParamsLike& p, const std::vector<std::string>& names,
                       const std::string& block) {
  std::size_t idx = 0;
  visit_tensors(p, [&](auto& t) {
    const std::string name = r.str();
    if (name != names[idx]) {
      throw ConfigError("corrupt checkpoint: expected tensor '" + names[idx] + "' in " + block +
                        " block, found '" + name + "'");
    }
    const std::int64_t rows = r.i64();
    const std::int64_t cols = r.i64();
    if (rows != t.rows() || cols != t.cols()) {
      throw ConfigError("corrupt checkpoint: tensor '" + name + "' has shape " +
                        std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                        std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
    }
    r.bytes(t.data(), sizeof(double) * static_cast<std::size_t>(t.size()));
    ++idx;
  });
}

}  // namespace detail

// Native-endian binary dump of every parameter tensor with shape metadata,
// optional optimizer state, and a trailing content hash. Written via a
// temporary file and rename so readers never observe a partial checkpoint.
inline void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params,
                            const CheckpointMeta& meta, const AdamState* adam = nullptr) {
  detail::ByteWriter w;
  w.bytes(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  w.u32(detail::kCheckpointVersion);
  w.u64(meta.registry_hash);
  w.u64(meta.seed);
  w.i64(meta.update_idx);
  w.f64(meta.curriculum_progress);
  w.u8(adam ? 1 : 0);

  const NetConfig& c = params.cfg;
  for (int dim : {c.proprio_dim, c.command_dim, c.clock_dim, c.trunk_hidden, c.latent_dim,
                  c.action_dim, c.oea_dim, c.privileged_dim, c.critic_hidden}) {
    w.u32(static_cast<std::uint32_t>(dim));
  }

  const std::vector<std::string> names = detail::tensor_names(params);
  detail::write_tensor_block(w, const_cast<PolicyParams&>(params), names);
  if (adam) {
    w.i64(adam->t);
    detail::write_tensor_block(w, const_cast<PolicyGrads&>(adam->m), names);
    detail::write_tensor_block(w, const_cast<PolicyGrads&>(adam->v), names);
  }
  w.u64(param_hash(params));

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write checkpoint '" + tmp.string() + "'");
    out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
    if (!out) throw ConfigError("short write on checkpoint '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

// Loads a checkpoint and verifies its integrity hash. When
// `expected_registry_hash` is given, a mismatch with the stored hash is an
// error unless `force` is set; the policy would silently act on the wrong
// robot set otherwise.
inline Checkpoint load_checkpoint(const std::filesystem::path& path,
                                  std::optional<std::uint64_t> expected_registry_hash = std::nullopt,
                                  bool force = false) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path.string() + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  detail::ByteReader r{buf};

  char magic[sizeof(detail::kCheckpointMagic)];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0) {
    throw ConfigError("'" + path.string() + "' is not a checkpoint file");
  }
  const std::uint32_t version = r.u32();
  if (version != detail::kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  }

  Checkpoint ck;
  ck.meta.registry_hash = r.u64();
  ck.meta.seed = r.u64();
  ck.meta.update_idx = r.i64();
  ck.meta.curriculum_progress = r.f64();
  const bool has_adam = r.u8() != 0;

  if (expected_registry_hash && *expected_registry_hash != ck.meta.registry_hash && !force) {
    throw ConfigError("checkpoint '" + path.string() + "' was trained against a different registry (hash " +
                      std::to_string(ck.meta.registry_hash) + ", expected " +
                      std::to_string(*expected_registry_hash) + "); pass --force to load anyway");
  }

  NetConfig c;
  for (int* dim : {&c.proprio_dim, &c.command_dim, &c.clock_dim, &c.trunk_hidden, &c.latent_dim,
                   &c.action_dim, &c.oea_dim, &c.privileged_dim, &c.critic_hidden}) {
    *dim = static_cast<int>(r.u32());
  }
  ck.params = init_policy(c, 0);

  const std::vector<std::string> names = detail::tensor_names(ck.params);
  detail::read_tensor_block(r, ck.params, names, "parameter");
  if (has_adam) {
    AdamState adam = make_adam_state(ck.params);
    adam.t = r.i64();
    detail::read_tensor_block(r, adam.m, names, "adam.m");
    detail::read_tensor_block(r, adam.v, names, "adam.v");
    ck.adam = std::move(adam);
  }
  const std::uint64_t stored_hash = r.u64();
  if (r.at != buf.size()) throw ConfigError("corrupt checkpoint: trailing bytes");
  if (stored_hash != param_hash(ck.params)) {
    throw ConfigError("checkpoint '" + path.string() + "' failed its integrity check");
  }
  return ck;
}

}  // namespace fleet
