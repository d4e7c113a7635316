// SPDX-License-Identifier: Apache-2.0
#include "lavino/cli.hpp"

#include "lavino/config.hpp"
#include "lavino/diagnostics.hpp"
#include "lavino/external_prior.hpp"
#include "lavino/metrics.hpp"
#include "lavino/rng.hpp"
#include "lavino/samplers.hpp"

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <fmt/core.h>
#include <fmt/ostream.h>

#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

namespace lavino::cli {

namespace fs = std::filesystem;

namespace {

std::string read_text(fs::path const &path)
{
  std::ifstream in(path);
  if (!in) {
    throw IoError(fmt::format("cannot read '{}'", path.string()));
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(fs::path const &path, std::string const &text)
{
  std::ofstream out(path);
  if (!out || !(out << text) || !out.flush()) {
    throw IoError(fmt::format("cannot write '{}'", path.string()));
  }
}

std::string const &required(KeyValues const &kv, std::string const &key)
{
  auto const *v = kv.find(key);
  if (!v) {
    throw ConfigError("meta." + key, "missing from measurement metadata");
  }
  return *v;
}

VideoTensor load(fs::path const &path) { return load_video(path, guess_format(path)); }

struct Common
{
  std::string config;
  std::string output;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

ExperimentConfig load_experiment(Common const &c, char const *seed_key)
{
  KeyValues overrides;
  for (auto const &s : c.sets) {
    auto const eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(s, "--set expects key=value");
    }
    auto key = s.substr(0, eq);
    auto value = s.substr(eq + 1);
    auto trim = [](std::string &x) {
      x.erase(0, x.find_first_not_of(" \t"));
      x.erase(x.find_last_not_of(" \t") + 1);
    };
    trim(key);
    trim(value);
    overrides.entries.emplace_back(key, value);
  }
  if (c.seed) {
    overrides.entries.emplace_back(seed_key, std::to_string(*c.seed));
  }
  if (!fs::exists(c.config)) {
    throw ConfigError("--config", fmt::format("'{}' does not exist", c.config));
  }
  return load_config(c.config, overrides);
}

std::unique_ptr<Prior> make_prior(PriorBinding const &b, ExperimentConfig const &cfg)
{
  switch (b.kind) {
  case PriorBinding::Kind::Gaussian:
    return std::make_unique<GaussianPrior>(
      GaussianPriorSpec{VideoTensor(Shape{1, 1, 1, 1}, cfg.gaussian_mean), cfg.gaussian_std});
  case PriorBinding::Kind::Smoothing: return std::make_unique<SmoothingPrior>();
  case PriorBinding::Kind::Identity: return std::make_unique<IdentityPrior>();
  case PriorBinding::Kind::External: {
    ExternalPriorOptions opts;
    opts.timeout = std::chrono::milliseconds(static_cast<long long>(cfg.prior_timeout_s * 1000.0));
    return ExternalPrior::connect(b.command, b.model, opts);
  }
  }
  throw std::logic_error("unhandled prior kind");
}

bool framewise(LinearOp const &op)
{
  for (auto const &s : op.stages()) {
    if (s.kind == StageKind::TemporalPool || s.kind == StageKind::TemporalCircBlur) {
      return false;
    }
  }
  return true;
}

// Runs the single-image sampler on every frame and merges the per-frame reports.
RestoreResult restore_framewise(VideoTensor const &y, LinearOp const &op, double sigma_n, Prior const &icm,
                                SamplerConfig const &cfg)
{
  if (!framewise(op)) {
    throw ConfigError("sampler", fmt::format("latino-image needs a frame-wise operator, got {}", op.spec()));
  }
  Shape const in = op.input_shape();
  Shape frame_in = in;
  frame_in.frames = 1;
  auto const frame_op = parse_operator(op.spec(), frame_in);

  VideoTensor x(in);
  RunReport merged;
  merged.sampler = "latino-image";
  merged.init = to_string(cfg.init);
  double init_sq = 0.0;
  for (std::size_t f = 0; f < in.frames; ++f) {
    auto const yf = y.frame_tensor(f);
    SamplerConfig fc = cfg;
    fc.seed = derive_seed(cfg.seed, {f});
    if (cfg.init_tensor) {
      fc.init_tensor = cfg.init_tensor->frame_tensor(f);
    }
    auto r = latino_image_restore(Measurement{yf, frame_op, sigma_n}, icm, fc);
    x.set_frame(f, r.x);
    init_sq += r.report.initial_residual * r.report.initial_residual;
    merged.nfe += r.report.nfe;
    merged.wall_ms += r.report.wall_ms;
    if (merged.iterations.empty()) {
      merged.iterations.resize(r.report.iterations.size());
    }
    for (std::size_t k = 0; k < r.report.iterations.size(); ++k) {
      auto &m = merged.iterations[k];
      auto const &it = r.report.iterations[k];
      m.k = it.k;
      m.residual = std::hypot(m.residual, it.residual);
      m.tv += it.tv;
      m.nfe += it.nfe;
      m.ms += it.ms;
    }
  }
  merged.initial_residual = std::sqrt(init_sq);
  return {std::move(x), std::move(merged)};
}

int cmd_degrade(Common const &c, std::ostream &out)
{
  auto cfg = load_experiment(c, "noise.seed");
  validate_for(cfg, Command::Degrade);
  auto const x = load(cfg.input);
  auto const op = experiment_operator(cfg, x.shape());
  auto const y = degrade(op, x, cfg.noise);

  fs::path const dir = c.output;
  fs::create_directories(dir);
  auto const path = dir / "measurement.vten";
  save_video(y, path, VideoFormat::Raw);
  MeasurementMeta meta{op.spec(), op.input_shape(), op.output_shape(), cfg.noise.sigma_n, cfg.noise.seed, cfg.problem};
  write_text(meta_path(path), format_meta(meta));
  fmt::print(out, "degrade: {} {} -> {} sigma_n={} seed={}\n", op.spec(), to_string(x.shape()), to_string(y.shape()),
             cfg.noise.sigma_n, cfg.noise.seed);
  fmt::print(out, "wrote {}\n", path.string());
  return kOk;
}

int cmd_restore(Common const &c, std::ostream &out)
{
  auto cfg = load_experiment(c, "sampler.seed");
  validate_for(cfg, Command::Restore);
  cfg.vxl.seed = cfg.sampler_cfg.seed;

  auto const mpath = meta_path(cfg.measurement);
  if (!fs::exists(mpath)) {
    throw ConfigError("paths.measurement", fmt::format("metadata sidecar '{}' is missing", mpath.string()));
  }
  auto const meta = parse_meta(read_text(mpath));
  auto const y = load(cfg.measurement);
  auto const op = parse_operator(meta.operator_spec, meta.input_shape);
  if (y.shape() != op.output_shape()) {
    throw ShapeError(fmt::format("measurement has shape {}, metadata operator {} produces {}", to_string(y.shape()),
                                 op.spec(), to_string(op.output_shape())));
  }
  if (cfg.sampler_cfg.init == InitMode::File) {
    cfg.sampler_cfg.init_tensor = load(cfg.init_file);
  }
  Measurement const m{y, op, meta.sigma_n};

  RestoreResult result;
  switch (cfg.sampler) {
  case SamplerKind::Latino: {
    auto const vcm = make_prior(cfg.vcm, cfg);
    auto const icm = make_prior(cfg.icm, cfg);
    result = latino_restore(m, vcm.get(), *icm, cfg.sampler_cfg);
    break;
  }
  case SamplerKind::LatinoV: {
    auto const vcm = make_prior(cfg.vcm, cfg);
    result = latino_v_restore(m, *vcm, cfg.sampler_cfg);
    break;
  }
  case SamplerKind::LatinoImage: {
    auto const icm = make_prior(cfg.icm, cfg);
    result = restore_framewise(y, op, meta.sigma_n, *icm, cfg.sampler_cfg);
    break;
  }
  case SamplerKind::VisionXL: {
    auto const vcm = make_prior(cfg.vcm, cfg);
    result = vision_xl_restore(m, *vcm, cfg.vxl);
    break;
  }
  case SamplerKind::AdmmTV: {
    auto r = admm_tv_restore(m, cfg.admm);
    result = {std::move(r.x), std::move(r.report)};
    break;
  }
  }

  fs::path const dir = c.output;
  fs::create_directories(dir);
  save_video(result.x, dir / "restored.vten", VideoFormat::Raw);
  save_video(result.x, dir / "frames", VideoFormat::FrameDir);
  write_text(dir / "report.txt", serialize(result.report));

  auto const final_res = result.report.iterations.empty() ? result.report.initial_residual
                                                          : result.report.iterations.back().residual;
  fmt::print(out, "restore: sampler={} init={} nfe={} residual {:.6g} -> {:.6g} in {:.0f} ms\n",
             result.report.sampler, result.report.init, result.report.nfe, result.report.initial_residual, final_res,
             result.report.wall_ms);
  if (cfg.metrics && !cfg.reference.empty()) {
    auto const metrics = evaluate(result.x, load(cfg.reference));
    auto const text = format_metrics(metrics);
    write_text(dir / "metrics.txt", text);
    out << text;
  }
  return kOk;
}

int cmd_evaluate(std::string const &x_path, std::string const &ref_path, std::string const &output, std::ostream &out)
{
  auto const text = format_metrics(evaluate(load(x_path), load(ref_path)));
  if (!output.empty()) {
    write_text(output, text);
  }
  out << text;
  return kOk;
}

int cmd_slice(std::string const &x_path, std::size_t column, std::string const &output, std::ostream &out)
{
  auto const x = load(x_path);
  save_slice_png(slice_extract(x, column), output);
  fmt::print(out, "slice: column {} of {} -> {}\n", column, to_string(x.shape()), output);
  return kOk;
}

struct Check
{
  std::string name;
  double measured;
  double bound;
  bool pass() const { return std::isfinite(measured) && measured <= bound; }
};

std::vector<Check> run_verify(bool break_adjoint)
{
  std::vector<Check> checks;

  Shape const s{9, 16, 16, 3};
  std::vector<std::pair<std::string, LinearOp>> ops{
    {"temporal-pool:4", LinearOp::temporal_pool(4, s)},
    {"temporal-pool:8", LinearOp::temporal_pool(8, s)},
    {"spatial-pool:4", LinearOp::spatial_pool(4, s)},
    {"spatial-pool:8", LinearOp::spatial_pool(8, s)},
    {"temporal-circ-blur:7", LinearOp::temporal_circ_blur(7, s)},
    {"problem A", problem_operator(Problem::A, s)},
    {"problem B", problem_operator(Problem::B, s)},
    {"problem C", problem_operator(Problem::C, s)},
  };
  for (auto const &[name, op] : ops) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto adjoint = [&](VideoTensor const &y) {
        auto a = op.adjoint(y);
        if (break_adjoint) {
          a *= 1.001;
        }
        return a;
      };
      worst = std::max(worst, dot_test_error(op, adjoint, seed));
    }
    checks.push_back({"dot test " + name, worst, 1e-5});
  }

  // CG against a dense solve on a materialized 64-dimensional operator.
  Shape const small{4, 4, 4, 1};
  auto const A = parse_operator("temporal-pool:2,spatial-pool:2", small);
  auto const dense = materialize(A);
  auto const n = static_cast<Eigen::Index>(small.size());
  auto const mrows = static_cast<Eigen::Index>(A.output_shape().size());
  Eigen::Map<Eigen::MatrixXd const> Ad(dense.data(), mrows, n);
  auto const u = gaussian_noise(small, 11);
  auto const y = gaussian_noise(A.output_shape(), 12);
  Eigen::Map<Eigen::VectorXd const> ue(u.data().data(), n);
  Eigen::Map<Eigen::VectorXd const> ye(y.data().data(), mrows);
  for (double eps : {1.0, 1e3, 1e5}) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n) + eps * Ad.transpose() * Ad;
    Eigen::VectorXd const ref = M.ldlt().solve(ue + eps * Ad.transpose() * ye);
    auto const x = prox_quadratic(A, y, u, eps, CGParams{static_cast<int>(n), 1e-12});
    Eigen::Map<Eigen::VectorXd const> xe(x.data().data(), n);
    checks.push_back({fmt::format("cg vs dense eps={:g}", eps), (xe - ref).norm() / ref.norm(), 1e-5});
  }

  auto const inst = bundled_tv_instance();
  TVDataObjective const obj(inst.op, inst.y, inst.sigma_n, inst.u, inst.weights, inst.delta_eta);
  auto const xp = prox_tv_data_pdhg(inst.op, inst.y, inst.sigma_n, inst.u, inst.weights, inst.delta_eta, PDHGParams{},
                                    CGParams{})
                    .x;
  auto const xa = prox_tv_data_adam(inst.op, inst.y, inst.sigma_n, inst.u, inst.weights, inst.delta_eta, AdamParams{});
  double const fp = obj.value(xp);
  double const fa = obj.value(xa);
  checks.push_back({"pdhg vs adam objective gap", std::abs(fa - fp) / std::abs(fp), 5e-3});
  return checks;
}

int cmd_verify(bool break_adjoint, std::ostream &out)
{
  bool ok = true;
  for (auto const &c : run_verify(break_adjoint)) {
    fmt::print(out, "{} {}: {:.3e} (bound {:.0e})\n", c.pass() ? "PASS" : "FAIL", c.name, c.measured, c.bound);
    ok = ok && c.pass();
  }
  return ok ? kOk : kVerifyFailed;
}

} // namespace

std::string format_meta(MeasurementMeta const &m)
{
  KeyValues kv;
  auto shape = [](Shape const &s) { return fmt::format("{},{},{},{}", s.frames, s.height, s.width, s.channels); };
  kv.entries = {
    {"operator", m.operator_spec},
    {"input_shape", shape(m.input_shape)},
    {"output_shape", shape(m.output_shape)},
    {"sigma_n", fmt::format("{:.17g}", m.sigma_n)},
    {"seed", std::to_string(m.seed)},
    {"problem", m.problem},
  };
  return "# lavino measurement metadata\n" + format_key_values(kv);
}

Shape parse_shape(std::string const &text)
{
  std::string t = text;
  std::erase_if(t, [](char ch) { return ch == '(' || ch == ')' || ch == ' '; });
  std::stringstream ss(t);
  std::string part;
  std::vector<std::size_t> dims;
  while (std::getline(ss, part, ',')) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(part, &pos);
    } catch (std::exception const &) {
      pos = 0;
    }
    if (pos == 0 || pos != part.size() || part[0] == '-') {
      throw std::invalid_argument(fmt::format("bad shape '{}'", text));
    }
    dims.push_back(v);
  }
  if (dims.size() != 4) {
    throw std::invalid_argument(fmt::format("shape '{}' needs 4 dimensions", text));
  }
  Shape s{dims[0], dims[1], dims[2], dims[3]};
  validate_shape(s);
  return s;
}

MeasurementMeta parse_meta(std::string const &text)
{
  auto const kv = parse_key_values(text);
  MeasurementMeta m;
  m.operator_spec = required(kv, "operator");
  try {
    m.input_shape = parse_shape(required(kv, "input_shape"));
  } catch (ConfigError const &) {
    throw;
  } catch (std::invalid_argument const &e) {
    throw ConfigError("meta.input_shape", e.what());
  }
  if (auto const *o = kv.find("output_shape")) {
    try {
      m.output_shape = parse_shape(*o);
    } catch (std::invalid_argument const &e) {
      throw ConfigError("meta.output_shape", e.what());
    }
  }
  auto const &sig = required(kv, "sigma_n");
  char *end = nullptr;
  m.sigma_n = std::strtod(sig.c_str(), &end);
  if (end == sig.c_str() || *end != '\0' || !std::isfinite(m.sigma_n) || m.sigma_n < 0.0) {
    throw ConfigError("meta.sigma_n", fmt::format("'{}' is not a non-negative number", sig));
  }
  if (auto const *seed = kv.find("seed")) {
    try {
      m.seed = std::stoull(*seed);
    } catch (std::exception const &) {
      throw ConfigError("meta.seed", fmt::format("'{}' is not an unsigned integer", *seed));
    }
  }
  if (auto const *p = kv.find("problem")) {
    m.problem = *p;
  }
  return m;
}

fs::path meta_path(fs::path const &measurement)
{
  auto p = measurement;
  p.replace_extension(".meta");
  return p;
}

int run(std::vector<std::string> const &args, std::ostream &out, std::ostream &err)
{
  CLI::App app{"Zero-shot video restoration with split Langevin samplers"};
  app.require_subcommand(1);

  Common dc, rc;
  auto add_common = [](CLI::App *sub, Common &c) {
    sub->add_option("--config", c.config, "Experiment config file")->required();
    sub->add_option("--output", c.output, "Output directory")->required();
    sub->add_option("--set", c.sets, "Override a config key (key=value)");
  };
  auto *degrade_cmd = app.add_subcommand("degrade", "Apply the forward operator and noise to an input video");
  add_common(degrade_cmd, dc);
  degrade_cmd->add_option("--seed", dc.seed, "Noise seed");
  auto *restore_cmd = app.add_subcommand("restore", "Restore a measurement with the configured sampler");
  add_common(restore_cmd, rc);
  restore_cmd->add_option("--seed", rc.seed, "Sampler seed");

  std::string x_path, ref_path, eval_out;
  auto *evaluate_cmd = app.add_subcommand("evaluate", "PSNR and SSIM of a restoration against a reference");
  evaluate_cmd->add_option("x", x_path, "Restored video")->required();
  evaluate_cmd->add_option("reference", ref_path, "Ground-truth video")->required();
  evaluate_cmd->add_option("--output", eval_out, "Also write the metric table here");

  std::string verify_config;
  bool break_adjoint = false;
  auto *verify_cmd = app.add_subcommand("verify", "Operator, CG and TV-solver self checks");
  verify_cmd->add_option("--config", verify_config, "Accepted for symmetry; checks use fixed instances");
  verify_cmd->add_flag("--test-break-adjoint", break_adjoint)->group("");

  std::string slice_path, slice_out;
  std::size_t column = 0;
  auto *slice_cmd = app.add_subcommand("slice", "Write the (row, frame) slice at a fixed column as PNG");
  slice_cmd->add_option("x", slice_path, "Video")->required();
  slice_cmd->add_option("--column", column, "Column index")->required();
  slice_cmd->add_option("--output", slice_out, "PNG path")->required();

  std::vector<std::string> argv_store{"lavino"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char *> argv;
  for (auto &a : argv_store) {
    argv.push_back(a.data());
  }
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (CLI::ParseError const &e) {
    int const code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*degrade_cmd) {
      return cmd_degrade(dc, out);
    }
    if (*restore_cmd) {
      return cmd_restore(rc, out);
    }
    if (*evaluate_cmd) {
      return cmd_evaluate(x_path, ref_path, eval_out, out);
    }
    if (*verify_cmd) {
      if (!verify_config.empty() && !fs::exists(verify_config)) {
        throw ConfigError("--config", fmt::format("'{}' does not exist", verify_config));
      }
      return cmd_verify(break_adjoint, out);
    }
    if (*slice_cmd) {
      return cmd_slice(slice_path, column, slice_out, out);
    }
  } catch (ConfigError const &e) {
    fmt::print(err, "error: {}\n", e.what());
    return kValidation;
  } catch (std::invalid_argument const &e) {
    fmt::print(err, "error: {}\n", e.what());
    return kValidation;
  } catch (std::out_of_range const &e) {
    fmt::print(err, "error: {}\n", e.what());
    return kValidation;
  } catch (std::exception const &e) {
    fmt::print(err, "error: {}\n", e.what());
    return kRuntime;
  }
  return kValidation;
}

} // namespace lavino::cli
