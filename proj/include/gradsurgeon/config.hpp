#pragma once

// Run configuration and its `key = value` file format.
//
// One assignment per line. `#` starts a comment; blank lines are ignored.
// Keys not listed in config_keys() are rejected, as are repeated keys and
// values that do not parse in full. Every key is optional; missing keys keep
// their defaults.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gradsurgeon/datasets.hpp"
#include "gradsurgeon/encoders.hpp"
#include "gradsurgeon/trainer.hpp"

namespace gradsurgeon {

enum class BaseEncoderKind { kIdentity, kTanh };

struct RunConfig {
  SurgeryConfig surgery;
  SyntheticSpec data;
  /// One seed drives data generation and training; they use disjoint
  /// derived streams.
  std::uint64_t seed = 0;
  BaseEncoderKind encoder = BaseEncoderKind::kIdentity;
  std::size_t encoder_depth = 1;  // tanh encoder: number of d x d layers
  double encoder_gain = 1.0;
  std::size_t drift_k = 10;
  std::size_t drift_samples = 512;  // leading in-domain test records used for drift
  std::size_t probe_steps = 500;
  double probe_lr = 0.1;

  /// Pushes `seed` into the data and training configs and validates both.
  void finalize();
};

struct ConfigKey {
  std::string_view name;
  std::string_view help;
};

/// The documented schema, in echo order.
const std::vector<ConfigKey>& config_keys();

/// Sets one key. Throws ValidationError naming the key on unknown keys or
/// unparsable values.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

/// Parses a config file into ordered (key, value) pairs after syntax checks.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path);

/// Defaults overridden by the file's assignments.
RunConfig load_config(const std::filesystem::path& path);

/// Effective values for every key, in schema order, formatted so that
/// set_config_value(echo) reproduces the config bit for bit.
std::vector<std::pair<std::string, std::string>> echo_config(const RunConfig& cfg);
std::string config_text(const RunConfig& cfg);
/// FNV-1a of config_text, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

/// Base encoder selected by the config, with input and output dimension `dim`.
MlpEncoder make_base_encoder(const RunConfig& cfg, std::size_t dim);

/// Round-trip formatting helpers shared by the config, checkpoint and
/// report writers.
std::string format_double(double v);
double parse_double(std::string_view text, std::string_view what);
std::uint64_t parse_uint(std::string_view text, std::string_view what);

std::string hex64(std::uint64_t v);
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace gradsurgeon
