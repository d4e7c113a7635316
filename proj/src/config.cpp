// SPDX-License-Identifier: Apache-2.0
#include "lavino/config.hpp"

#include <fmt/core.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace lavino {

ConfigError::ConfigError(std::string field, std::string const &message)
  : std::invalid_argument(fmt::format("config field '{}': {}", field, message))
  , field_(std::move(field))
{
}

std::string const *KeyValues::find(std::string const &key) const
{
  std::string const *hit = nullptr;
  for (auto const &[k, v] : entries) {
    if (k == key) {
      hit = &v;
    }
  }
  return hit;
}

namespace {

std::string trim(std::string_view s)
{
  auto const b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) {
    return {};
  }
  auto const e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(std::string const &field, std::string const &v)
{
  double out = 0.0;
  auto const *end = v.data() + v.size();
  auto const [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
    throw ConfigError(field, fmt::format("expected a number, got '{}'", v));
  }
  return out;
}

double parse_nonneg(std::string const &field, std::string const &v)
{
  double const x = parse_double(field, v);
  if (x < 0.0) {
    throw ConfigError(field, fmt::format("must be >= 0, got {}", v));
  }
  return x;
}

double parse_positive(std::string const &field, std::string const &v)
{
  double const x = parse_double(field, v);
  if (!(x > 0.0)) {
    throw ConfigError(field, fmt::format("must be > 0, got {}", v));
  }
  return x;
}

std::uint64_t parse_u64(std::string const &field, std::string const &v)
{
  std::uint64_t out = 0;
  auto const *end = v.data() + v.size();
  auto const [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(field, fmt::format("expected an unsigned integer, got '{}'", v));
  }
  return out;
}

int parse_count(std::string const &field, std::string const &v)
{
  auto const n = parse_u64(field, v);
  if (n < 1 || n > 1'000'000) {
    throw ConfigError(field, fmt::format("must be an integer in [1, 1000000], got {}", v));
  }
  return static_cast<int>(n);
}

bool parse_bool(std::string const &field, std::string const &v)
{
  if (v == "true" || v == "on" || v == "1") {
    return true;
  }
  if (v == "false" || v == "off" || v == "0") {
    return false;
  }
  throw ConfigError(field, fmt::format("expected true or false, got '{}'", v));
}

std::vector<int> parse_timesteps(std::string const &field, std::string const &v)
{
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    auto const n = parse_u64(field, item);
    if (n < 1 || n > 1'000'000) {
      throw ConfigError(field, fmt::format("timestep {} out of range", item));
    }
    out.push_back(static_cast<int>(n));
  }
  if (out.empty()) {
    throw ConfigError(field, "expected a comma-separated list of timesteps");
  }
  return out;
}

SamplerKind parse_sampler(std::string const &field, std::string const &v)
{
  if (v == "latino") {
    return SamplerKind::Latino;
  }
  if (v == "latino-v") {
    return SamplerKind::LatinoV;
  }
  if (v == "latino-image") {
    return SamplerKind::LatinoImage;
  }
  if (v == "vision-xl") {
    return SamplerKind::VisionXL;
  }
  if (v == "admm-tv") {
    return SamplerKind::AdmmTV;
  }
  throw ConfigError(field, fmt::format("unknown sampler '{}' (latino, latino-v, latino-image, vision-xl, admm-tv)", v));
}

} // namespace

KeyValues parse_key_values(std::string const &text)
{
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto const hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    auto const eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("line {}", lineno), fmt::format("expected 'key = value', got '{}'", line));
    }
    auto key = trim(std::string_view(line).substr(0, eq));
    auto value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(fmt::format("line {}", lineno), "empty key");
    }
    kv.entries.emplace_back(std::move(key), std::move(value));
  }
  return kv;
}

KeyValues read_key_values(std::filesystem::path const &path)
{
  std::ifstream in(path);
  if (!in) {
    throw IoError(fmt::format("cannot read '{}'", path.string()));
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

std::string format_key_values(KeyValues const &kv)
{
  std::string out;
  for (auto const &[k, v] : kv.entries) {
    out += fmt::format("{} = {}\n", k, v);
  }
  return out;
}

std::string to_string(SamplerKind k)
{
  switch (k) {
  case SamplerKind::Latino:
    return "latino";
  case SamplerKind::LatinoV:
    return "latino-v";
  case SamplerKind::LatinoImage:
    return "latino-image";
  case SamplerKind::VisionXL:
    return "vision-xl";
  case SamplerKind::AdmmTV:
    return "admm-tv";
  }
  return "?";
}

PriorBinding parse_prior_binding(std::string const &field, std::string const &value)
{
  PriorBinding b;
  if (value == "builtin:gaussian") {
    b.kind = PriorBinding::Kind::Gaussian;
  } else if (value == "builtin:smoothing") {
    b.kind = PriorBinding::Kind::Smoothing;
  } else if (value == "builtin:identity") {
    b.kind = PriorBinding::Kind::Identity;
  } else if (value.rfind("external:", 0) == 0 && value.size() > 9) {
    b.kind = PriorBinding::Kind::External;
    b.command = value.substr(9);
  } else {
    throw ConfigError(field, fmt::format("expected builtin:gaussian, builtin:smoothing, builtin:identity or "
                                         "external:<command>, got '{}'",
                                         value));
  }
  return b;
}

std::string to_string(PriorBinding const &b)
{
  switch (b.kind) {
  case PriorBinding::Kind::Gaussian:
    return "builtin:gaussian";
  case PriorBinding::Kind::Smoothing:
    return "builtin:smoothing";
  case PriorBinding::Kind::Identity:
    return "builtin:identity";
  case PriorBinding::Kind::External:
    return "external:" + b.command;
  }
  return "?";
}

bool has_eps_predictor(PriorBinding const &b)
{
  return b.kind == PriorBinding::Kind::Gaussian || b.kind == PriorBinding::Kind::External;
}

ExperimentConfig default_config(std::string const &problem)
{
  ExperimentConfig c;
  c.problem = problem;
  c.vcm.model = "vcm";
  c.icm.model = "icm";
  auto &s = c.sampler_cfg;
  if (problem == "A") {
    s.tv = {0.0, 0.0, 0.005};
    s.step_vcm = 1e5;
    s.step_icm = 1e5;
    s.tv_solver = TVSolver::Pdhg;
  } else if (problem == "B") {
    s.tv = {0.0, 0.0, 0.0};
    s.step_vcm = 1e5;
    s.step_icm = 2e3;
    s.tv_solver = TVSolver::Pdhg;
  } else if (problem == "C") {
    s.tv = {1e-4, 1e-4, 1e-6};
    s.step_vcm = 1e5;
    s.step_icm = 1e5;
    s.tv_solver = TVSolver::Adam;
  } else if (problem != "custom") {
    throw ConfigError("problem", fmt::format("expected A, B, C or custom, got '{}'", problem));
  }
  c.admm.tv = s.tv;
  return c;
}

ExperimentConfig build_config(KeyValues const &kv)
{
  std::string const *problem = kv.find("problem");
  ExperimentConfig c = default_config(problem ? *problem : "A");
  auto &s = c.sampler_cfg;
  bool tv_solver_set = false;
  bool admm_tv_set = false;

  using Setter = std::function<void(std::string const &, std::string const &)>;
  std::map<std::string, Setter> const setters{
    {"problem", [](auto const &, auto const &) {}},
    {"operator", [&](auto const &f, auto const &v) {
       try {
         parse_operator(v, Shape{1, 1, 1, 1});
       } catch (ShapeError const &) {
         // Divisibility is checked once the input shape is known.
       } catch (std::invalid_argument const &e) {
         throw ConfigError(f, e.what());
       }
       c.operator_spec = v;
     }},
    {"noise.sigma_n", [&](auto const &f, auto const &v) { c.noise.sigma_n = parse_nonneg(f, v); }},
    {"noise.seed", [&](auto const &f, auto const &v) { c.noise.seed = parse_u64(f, v); }},
    {"sampler", [&](auto const &f, auto const &v) { c.sampler = parse_sampler(f, v); }},
    {"sampler.vcm_timesteps", [&](auto const &f, auto const &v) {
       s.vcm_timesteps = parse_timesteps(f, v);
       c.timesteps_set = true;
     }},
    {"sampler.icm_timesteps", [&](auto const &f, auto const &v) {
       s.icm_timesteps = parse_timesteps(f, v);
       c.timesteps_set = true;
     }},
    {"sampler.step_vcm", [&](auto const &f, auto const &v) { s.step_vcm = parse_positive(f, v); }},
    {"sampler.step_icm", [&](auto const &f, auto const &v) { s.step_icm = parse_positive(f, v); }},
    {"sampler.tv_solver", [&](auto const &f, auto const &v) {
       if (v == "pdhg") {
         s.tv_solver = TVSolver::Pdhg;
       } else if (v == "adam") {
         s.tv_solver = TVSolver::Adam;
       } else {
         throw ConfigError(f, fmt::format("expected pdhg or adam, got '{}'", v));
       }
       tv_solver_set = true;
     }},
    {"sampler.seed", [&](auto const &f, auto const &v) { s.seed = parse_u64(f, v); }},
    {"sampler.init", [&](auto const &f, auto const &v) {
       if (v == "pseudo-inverse") {
         s.init = InitMode::PseudoInverse;
       } else if (v == "file") {
         s.init = InitMode::File;
       } else {
         throw ConfigError(f, fmt::format("expected pseudo-inverse or file, got '{}'", v));
       }
     }},
    {"tv.lambda_h", [&](auto const &f, auto const &v) { s.tv.lambda_h = parse_nonneg(f, v); }},
    {"tv.lambda_v", [&](auto const &f, auto const &v) { s.tv.lambda_v = parse_nonneg(f, v); }},
    {"tv.lambda_t", [&](auto const &f, auto const &v) { s.tv.lambda_t = parse_nonneg(f, v); }},
    {"cg.iters", [&](auto const &f, auto const &v) { s.cg.max_iters = parse_count(f, v); }},
    {"cg.tol", [&](auto const &f, auto const &v) { s.cg.tol = parse_positive(f, v); }},
    {"pdhg.iters", [&](auto const &f, auto const &v) { s.pdhg.iters = parse_count(f, v); }},
    {"pdhg.theta", [&](auto const &f, auto const &v) {
       s.pdhg.theta = parse_nonneg(f, v);
       if (s.pdhg.theta > 1.0) {
         throw ConfigError(f, fmt::format("must lie in [0, 1], got {}", v));
       }
     }},
    {"adam.lr", [&](auto const &f, auto const &v) { s.adam.lr = parse_positive(f, v); }},
    {"adam.iters", [&](auto const &f, auto const &v) { s.adam.iters = parse_count(f, v); }},
    {"vxl.rho_fraction", [&](auto const &f, auto const &v) {
       c.vxl.rho_fraction = parse_positive(f, v);
       if (c.vxl.rho_fraction >= 1.0) {
         throw ConfigError(f, fmt::format("must lie in (0, 1), got {}", v));
       }
     }},
    {"vxl.inversion_steps", [&](auto const &f, auto const &v) { c.vxl.inversion_steps = parse_count(f, v); }},
    {"vxl.sampling_steps", [&](auto const &f, auto const &v) {
       c.vxl.sampling_steps = parse_count(f, v);
       if (c.vxl.sampling_steps < 2) {
         throw ConfigError(f, "must be >= 2");
       }
     }},
    {"vxl.cg_iters", [&](auto const &f, auto const &v) { c.vxl.cg_iters = parse_count(f, v); }},
    {"vxl.sigma_max", [&](auto const &f, auto const &v) { c.vxl.sigma_max = parse_nonneg(f, v); }},
    {"admm.rho", [&](auto const &f, auto const &v) { c.admm.rho = parse_positive(f, v); }},
    {"admm.iters", [&](auto const &f, auto const &v) { c.admm.iters = parse_count(f, v); }},
    {"admm.lambda_h", [&](auto const &f, auto const &v) {
       c.admm.tv.lambda_h = parse_nonneg(f, v);
       admm_tv_set = true;
     }},
    {"admm.lambda_v", [&](auto const &f, auto const &v) {
       c.admm.tv.lambda_v = parse_nonneg(f, v);
       admm_tv_set = true;
     }},
    {"admm.lambda_t", [&](auto const &f, auto const &v) {
       c.admm.tv.lambda_t = parse_nonneg(f, v);
       admm_tv_set = true;
     }},
    {"prior.vcm", [&](auto const &f, auto const &v) {
       auto model = c.vcm.model;
       c.vcm = parse_prior_binding(f, v);
       c.vcm.model = model;
     }},
    {"prior.icm", [&](auto const &f, auto const &v) {
       auto model = c.icm.model;
       c.icm = parse_prior_binding(f, v);
       c.icm.model = model;
     }},
    {"prior.vcm_model", [&](auto const &f, auto const &v) {
       if (v.empty()) {
         throw ConfigError(f, "must not be empty");
       }
       c.vcm.model = v;
     }},
    {"prior.icm_model", [&](auto const &f, auto const &v) {
       if (v.empty()) {
         throw ConfigError(f, "must not be empty");
       }
       c.icm.model = v;
     }},
    {"prior.gaussian_mean", [&](auto const &f, auto const &v) { c.gaussian_mean = parse_double(f, v); }},
    {"prior.gaussian_std", [&](auto const &f, auto const &v) { c.gaussian_std = parse_positive(f, v); }},
    {"prior.timeout_s", [&](auto const &f, auto const &v) { c.prior_timeout_s = parse_positive(f, v); }},
    {"paths.input", [&](auto const &, auto const &v) { c.input = v; }},
    {"paths.measurement", [&](auto const &, auto const &v) { c.measurement = v; }},
    {"paths.init_file", [&](auto const &, auto const &v) { c.init_file = v; }},
    {"paths.reference", [&](auto const &, auto const &v) { c.reference = v; }},
    {"metrics", [&](auto const &f, auto const &v) { c.metrics = parse_bool(f, v); }},
  };

  for (auto const &[key, value] : kv.entries) {
    auto const it = setters.find(key);
    if (it == setters.end()) {
      throw ConfigError(key, "unknown key");
    }
    if (value.empty() && key.rfind("paths.", 0) != 0) {
      throw ConfigError(key, "missing value");
    }
    it->second(key, value);
  }

  if (!admm_tv_set) {
    c.admm.tv = s.tv;
  }
  if (!tv_solver_set && !s.tv.pure_temporal()) {
    s.tv_solver = TVSolver::Adam;
  }
  if (s.tv_solver == TVSolver::Pdhg && !s.tv.pure_temporal()) {
    throw ConfigError("sampler.tv_solver", "pdhg needs tv.lambda_h = tv.lambda_v = 0; use adam");
  }
  // Warm-started problem C drops the first (noisiest) step of each schedule.
  if (c.problem == "C" && s.init == InitMode::File && !c.timesteps_set) {
    s.vcm_timesteps = {522, 375, 255, 125};
    s.icm_timesteps = {249, 124, 63};
  }
  if (c.problem == "custom" && c.operator_spec.empty()) {
    throw ConfigError("operator", "problem = custom needs an operator spec");
  }
  return c;
}

ExperimentConfig load_config(std::filesystem::path const &path, KeyValues const &overrides)
{
  auto kv = read_key_values(path);
  for (auto const &e : overrides.entries) {
    kv.entries.push_back(e);
  }
  return build_config(kv);
}

LinearOp experiment_operator(ExperimentConfig const &cfg, Shape input)
{
  if (!cfg.operator_spec.empty()) {
    return parse_operator(cfg.operator_spec, input);
  }
  return problem_operator(parse_problem(cfg.problem), input);
}

void validate_for(ExperimentConfig const &cfg, Command cmd)
{
  namespace fs = std::filesystem;
  if (cmd == Command::Degrade) {
    if (cfg.input.empty()) {
      throw ConfigError("paths.input", "required for degrade");
    }
    if (!fs::exists(cfg.input)) {
      throw ConfigError("paths.input", fmt::format("'{}' does not exist", cfg.input.string()));
    }
    return;
  }

  if (cfg.measurement.empty()) {
    throw ConfigError("paths.measurement", "required for restore");
  }
  if (!fs::exists(cfg.measurement)) {
    throw ConfigError("paths.measurement", fmt::format("'{}' does not exist", cfg.measurement.string()));
  }
  if (!cfg.reference.empty() && !fs::exists(cfg.reference)) {
    throw ConfigError("paths.reference", fmt::format("'{}' does not exist", cfg.reference.string()));
  }
  auto const &s = cfg.sampler_cfg;
  if (s.init == InitMode::File) {
    if (cfg.init_file.empty()) {
      throw ConfigError("paths.init_file", "required when sampler.init = file");
    }
    if (!fs::exists(cfg.init_file)) {
      throw ConfigError("paths.init_file", fmt::format("'{}' does not exist", cfg.init_file.string()));
    }
  }
  switch (cfg.sampler) {
  case SamplerKind::Latino:
    if (s.icm_timesteps.size() + 1 != s.vcm_timesteps.size()) {
      throw ConfigError("sampler.icm_timesteps", fmt::format("needs {} entries (one fewer than vcm_timesteps), got {}",
                                                             s.vcm_timesteps.size() - 1, s.icm_timesteps.size()));
    }
    break;
  case SamplerKind::VisionXL:
    if (!has_eps_predictor(cfg.vcm)) {
      throw ConfigError("prior.vcm",
                        fmt::format("vision-xl needs a prior with an eps predictor; {} has none", to_string(cfg.vcm)));
    }
    break;
  default:
    break;
  }
  for (auto const *ts : {&s.vcm_timesteps, &s.icm_timesteps}) {
    for (int t : *ts) {
      if (t >= 1000) {
        throw ConfigError(ts == &s.vcm_timesteps ? "sampler.vcm_timesteps" : "sampler.icm_timesteps",
                          fmt::format("timestep {} outside (0, 1000)", t));
      }
    }
  }
}

} // namespace lavino
