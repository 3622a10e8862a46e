#pragma once

#include "fleet/embodiment.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace fleet {

inline constexpr int kRegistrySchemaVersion = 1;

namespace detail {

// Every map in a registry or config file is checked against an allowlist so
// that typos fail loudly instead of silently falling back to defaults.
inline void require_keys(const YAML::Node& node, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!node.IsMap()) throw ConfigError(where + ": expected a mapping");
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError(where + ": unknown field '" + key + "'");
  }
}

inline YAML::Node require_field(const YAML::Node& node, const std::string& key,
                                const std::string& where) {
  YAML::Node child = node[key];
  if (!child) throw ConfigError(where + ": missing field '" + key + "'");
  return child;
}

inline Vector parse_vector(const YAML::Node& node, const std::string& where) {
  if (!node.IsSequence()) throw ConfigError(where + ": expected a sequence");
  Vector out(node.size());
  for (std::size_t i = 0; i < node.size(); ++i) out[static_cast<int>(i)] = node[i].as<double>();
  return out;
}

inline std::vector<int> parse_int_list(const YAML::Node& node, const std::string& where) {
  if (!node.IsSequence()) throw ConfigError(where + ": expected a sequence");
  std::vector<int> out(node.size());
  for (std::size_t i = 0; i < node.size(); ++i) out[i] = node[i].as<int>();
  return out;
}

inline void append_double(std::string& buf, double v) {
  char tmp[40];
  std::snprintf(tmp, sizeof(tmp), "%.17g;", v);
  buf += tmp;
}

}  // namespace detail

inline BodyProperties parse_body(const YAML::Node& node, const std::string& where) {
  detail::require_keys(node, {"mass", "com", "inertia"}, where);
  BodyProperties b;
  b.mass = detail::require_field(node, "mass", where).as<double>();
  const Vector com = detail::parse_vector(detail::require_field(node, "com", where), where + ".com");
  if (com.size() != 3) throw ConfigError(where + ".com: expected 3 values");
  b.com = com;
  const Vector inertia =
      detail::parse_vector(detail::require_field(node, "inertia", where), where + ".inertia");
  if (inertia.size() != 6) throw ConfigError(where + ".inertia: expected 6 values");
  b.inertia = inertia;
  return b;
}

inline EmbodimentSpec load_embodiment_file(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  const std::string where = std::filesystem::path(path).filename().string();
  detail::require_keys(root,
                       {"schema_version", "id", "name", "n_dofs", "joint_map", "default_pose",
                        "stiffness", "damping", "upper_joints", "hip_joints",
                        "swing_height_targets", "nominal_base_height", "bodies", "actuation"},
                       where);
  const int schema = detail::require_field(root, "schema_version", where).as<int>();
  if (schema != kRegistrySchemaVersion) {
    throw ConfigError(where + ": schema_version " + std::to_string(schema) + " unsupported (want " +
                      std::to_string(kRegistrySchemaVersion) + ")");
  }

  EmbodimentSpec spec;
  spec.id = detail::require_field(root, "id", where).as<int>();
  spec.name = detail::require_field(root, "name", where).as<std::string>();
  spec.n_dofs = detail::require_field(root, "n_dofs", where).as<int>();
  spec.joint_map = detail::parse_int_list(detail::require_field(root, "joint_map", where),
                                          where + ".joint_map");
  spec.default_pose = detail::parse_vector(detail::require_field(root, "default_pose", where),
                                           where + ".default_pose");
  spec.stiffness =
      detail::parse_vector(detail::require_field(root, "stiffness", where), where + ".stiffness");
  spec.damping =
      detail::parse_vector(detail::require_field(root, "damping", where), where + ".damping");
  spec.upper_joints = detail::parse_int_list(detail::require_field(root, "upper_joints", where),
                                             where + ".upper_joints");
  spec.hip_joints = detail::parse_int_list(detail::require_field(root, "hip_joints", where),
                                           where + ".hip_joints");
  const Vector swing = detail::parse_vector(
      detail::require_field(root, "swing_height_targets", where), where + ".swing_height_targets");
  if (swing.size() != kFeetCount) throw ConfigError(where + ".swing_height_targets: expected 2 values");
  spec.swing_height_targets = {swing[0], swing[1]};
  spec.nominal_base_height = detail::require_field(root, "nominal_base_height", where).as<double>();

  const YAML::Node bodies = detail::require_field(root, "bodies", where);
  detail::require_keys(bodies, {"torso", "left_foot", "right_foot"}, where + ".bodies");
  spec.bodies[0] = parse_body(detail::require_field(bodies, "torso", where), where + ".bodies.torso");
  spec.bodies[1] =
      parse_body(detail::require_field(bodies, "left_foot", where), where + ".bodies.left_foot");
  spec.bodies[2] =
      parse_body(detail::require_field(bodies, "right_foot", where), where + ".bodies.right_foot");

  const YAML::Node act = detail::require_field(root, "actuation", where);
  detail::require_keys(act, {"vx", "vy", "yaw", "height", "pitch"}, where + ".actuation");
  const char* row_names[5] = {"vx", "vy", "yaw", "height", "pitch"};
  spec.actuation_matrix.resize(5, spec.n_dofs);
  for (int r = 0; r < 5; ++r) {
    const Vector row = detail::parse_vector(detail::require_field(act, row_names[r], where),
                                            where + ".actuation." + row_names[r]);
    if (row.size() != spec.n_dofs) {
      throw ConfigError(where + ".actuation." + row_names[r] + ": expected n_dofs values");
    }
    spec.actuation_matrix.row(r) = row;
  }

  spec.validate();
  return spec;
}

// Frozen z-score constants for the inertial feature block. Stored alongside
// the embodiment files so adding a robot is an explicit, reviewable change.
struct EmbodimentNormalization {
  Vector mean = Vector::Zero(kEmbodimentObsDim);
  Vector stddev = Vector::Ones(kEmbodimentObsDim);
};

inline EmbodimentNormalization load_normalization_file(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  const std::string where = std::filesystem::path(path).filename().string();
  detail::require_keys(root, {"schema_version", "embodiment_observation"}, where);
  const int schema = detail::require_field(root, "schema_version", where).as<int>();
  if (schema != kRegistrySchemaVersion) {
    throw ConfigError(where + ": schema_version " + std::to_string(schema) + " unsupported");
  }
  const YAML::Node block = detail::require_field(root, "embodiment_observation", where);
  detail::require_keys(block, {"mean", "std"}, where + ".embodiment_observation");
  EmbodimentNormalization norm;
  norm.mean = detail::parse_vector(detail::require_field(block, "mean", where), where + ".mean");
  norm.stddev = detail::parse_vector(detail::require_field(block, "std", where), where + ".std");
  if (norm.mean.size() != kEmbodimentObsDim || norm.stddev.size() != kEmbodimentObsDim) {
    throw ConfigError(where + ": mean/std must have " + std::to_string(kEmbodimentObsDim) +
                      " entries");
  }
  return norm;
}

class Registry {
 public:
  static Registry load(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw ConfigError("registry directory not found: " + dir);
    Registry reg;
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() != ".yaml" && entry.path().extension() != ".yml") continue;
      if (entry.path().filename() == "normalization.yaml") {
        reg.normalization_ = load_normalization_file(entry.path().string());
        reg.has_normalization_ = true;
        continue;
      }
      files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    for (const std::string& f : files) reg.specs_.push_back(load_embodiment_file(f));
    if (reg.specs_.empty()) throw ConfigError("registry directory has no embodiment files: " + dir);
    if (!reg.has_normalization_) throw ConfigError("registry is missing normalization.yaml: " + dir);
    std::sort(reg.specs_.begin(), reg.specs_.end(),
              [](const EmbodimentSpec& a, const EmbodimentSpec& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < reg.specs_.size(); ++i) {
      if (reg.specs_[i].id != static_cast<int>(i)) {
        throw ConfigError("registry ids must be 0..N-1 without gaps; found id " +
                          std::to_string(reg.specs_[i].id) + " at position " + std::to_string(i));
      }
      for (std::size_t j = i + 1; j < reg.specs_.size(); ++j) {
        if (reg.specs_[i].name == reg.specs_[j].name) {
          throw ConfigError("duplicate embodiment name '" + reg.specs_[i].name + "'");
        }
      }
    }
    return reg;
  }

  int size() const { return static_cast<int>(specs_.size()); }
  const std::vector<EmbodimentSpec>& specs() const { return specs_; }
  const EmbodimentSpec& spec(int id) const {
    if (id < 0 || id >= size()) throw ConfigError("embodiment id " + std::to_string(id) + " out of range");
    return specs_[static_cast<std::size_t>(id)];
  }
  const EmbodimentSpec& spec_by_name(const std::string& name) const {
    for (const EmbodimentSpec& s : specs_) {
      if (s.name == name) return s;
    }
    throw ConfigError("unknown embodiment '" + name + "'");
  }
  const EmbodimentNormalization& normalization() const { return normalization_; }

  // Normalized inertial feature block fed to the critic and regressed by the
  // actor's estimation head. Constant per embodiment.
  Vector embodiment_observation(int id) const {
    const Vector raw = raw_embodiment_features(spec(id));
    Vector out(kEmbodimentObsDim);
    for (int i = 0; i < kEmbodimentObsDim; ++i) {
      const double sd = std::abs(normalization_.stddev[i]) < 1e-12 ? 1.0 : normalization_.stddev[i];
      out[i] = (raw[i] - normalization_.mean[i]) / sd;
    }
    return out;
  }

  // All embodiment observations stacked by id, one row each.
  Matrix embodiment_observation_table() const {
    Matrix table(size(), kEmbodimentObsDim);
    for (int i = 0; i < size(); ++i) table.row(i) = embodiment_observation(i);
    return table;
  }

  // Content hash over a canonical serialization of every spec plus the
  // normalization constants. Checkpoints store it so a policy cannot be
  // silently reloaded against a different robot set.
  std::uint64_t hash() const {
    std::string buf;
    buf.reserve(1 << 14);
    auto add_vector = [&](const Vector& v) {
      for (int i = 0; i < v.size(); ++i) detail::append_double(buf, v[i]);
      buf += '|';
    };
    for (const EmbodimentSpec& s : specs_) {
      buf += s.name;
      buf += ';';
      buf += std::to_string(s.id) + ";" + std::to_string(s.n_dofs) + ";";
      for (int m : s.joint_map) buf += std::to_string(m) + ",";
      add_vector(s.default_pose);
      add_vector(s.stiffness);
      add_vector(s.damping);
      for (int k : s.upper_joints) buf += std::to_string(k) + ",";
      buf += '|';
      for (int k : s.hip_joints) buf += std::to_string(k) + ",";
      buf += '|';
      detail::append_double(buf, s.swing_height_targets[0]);
      detail::append_double(buf, s.swing_height_targets[1]);
      detail::append_double(buf, s.nominal_base_height);
      for (const BodyProperties& b : s.bodies) {
        detail::append_double(buf, b.mass);
        add_vector(b.com);
        add_vector(b.inertia);
      }
      for (int r = 0; r < 5; ++r) add_vector(s.actuation_matrix.row(r));
      buf += '\n';
    }
    add_vector(normalization_.mean);
    add_vector(normalization_.stddev);
    return fnv1a(buf);
  }

 private:
  std::vector<EmbodimentSpec> specs_;
  EmbodimentNormalization normalization_;
  bool has_normalization_ = false;
};

// Population statistics of the raw feature block across a robot set; used to
// produce (and in tests, to cross-check) the frozen normalization constants.
inline EmbodimentNormalization compute_normalization(const std::vector<EmbodimentSpec>& specs) {
  EmbodimentNormalization norm;
  if (specs.empty()) return norm;
  Matrix raw(static_cast<int>(specs.size()), kEmbodimentObsDim);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    raw.row(static_cast<int>(i)) = raw_embodiment_features(specs[i]);
  }
  norm.mean = raw.colwise().mean();
  for (int j = 0; j < kEmbodimentObsDim; ++j) {
    const double var = (raw.col(j).array() - norm.mean[j]).square().mean();
    norm.stddev[j] = std::sqrt(var);
  }
  return norm;
}

}  // namespace fleet
