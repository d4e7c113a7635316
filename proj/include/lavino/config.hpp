// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lavino/operators.hpp"
#include "lavino/samplers.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lavino {

/// Invalid configuration value; `field()` names the offending key.
class ConfigError : public std::invalid_argument
{
public:
  ConfigError(std::string field, std::string const &message);
  std::string const &field() const { return field_; }

private:
  std::string field_;
};

/// Ordered key/value pairs of a flat config file with '#' comments.
struct KeyValues
{
  std::vector<std::pair<std::string, std::string>> entries;
  std::string const *find(std::string const &key) const;
};

KeyValues parse_key_values(std::string const &text);
KeyValues read_key_values(std::filesystem::path const &path);
std::string format_key_values(KeyValues const &kv);

enum class SamplerKind
{
  Latino,
  LatinoV,
  LatinoImage,
  VisionXL,
  AdmmTV,
};

std::string to_string(SamplerKind k);

struct PriorBinding
{
  enum class Kind
  {
    Gaussian,
    Smoothing,
    Identity,
    External,
  };
  Kind kind = Kind::Smoothing;
  std::string command; // external only
  std::string model;   // model id sent in the handshake
};

PriorBinding parse_prior_binding(std::string const &field, std::string const &value);
std::string to_string(PriorBinding const &b);
bool has_eps_predictor(PriorBinding const &b);

struct ExperimentConfig
{
  std::string problem = "A"; // A, B, C or custom
  std::string operator_spec; // empty: derived from the problem
  NoiseSpec noise{0.001, 0};
  SamplerKind sampler = SamplerKind::Latino;
  SamplerConfig sampler_cfg{};
  VisionXLConfig vxl{};
  AdmmConfig admm{};
  PriorBinding vcm{};
  PriorBinding icm{};
  double gaussian_mean = 0.0;
  double gaussian_std = 1.0;
  double prior_timeout_s = 300.0;
  std::filesystem::path input;
  std::filesystem::path measurement;
  std::filesystem::path init_file;
  std::filesystem::path reference;
  bool metrics = true;
  bool timesteps_set = false; // either timestep list given explicitly
};

/// Per-problem regularization weights, step sizes and default schedules for a problem letter ("A", "B", "C") or "custom".
ExperimentConfig default_config(std::string const &problem);

/* Builds a config from key/value pairs: the `problem` key (if any) selects
 * defaults, then every other key overrides them. Unknown keys and malformed
 * values raise ConfigError naming the key.
 */
ExperimentConfig build_config(KeyValues const &kv);
ExperimentConfig load_config(std::filesystem::path const &path, KeyValues const &overrides = {});

/// Operator for an input shape: operator_spec if set, else the problem's stages.
LinearOp experiment_operator(ExperimentConfig const &cfg, Shape input);

enum class Command
{
  Degrade,
  Restore,
};

/// Command-specific checks: referenced paths exist, sampler and prior fit together.
void validate_for(ExperimentConfig const &cfg, Command cmd);

} // namespace lavino
