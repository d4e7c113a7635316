// SPDX-License-Identifier: Apache-2.0
#include "lavino/samplers.hpp"

#include "lavino/parallel.hpp"
#include "lavino/rng.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace lavino {

namespace {

// Stream tags for derive_seed; changing them changes every sampler's output.
constexpr std::uint64_t kVcmStream = 0x5643;
constexpr std::uint64_t kIcmStream = 0x4943;
constexpr std::uint64_t kRenoiseStream = 0x5258;

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start)
{
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

double effective_sigma(double sigma_n)
{
  if (!(sigma_n >= 0.0) || !std::isfinite(sigma_n)) {
    throw std::invalid_argument(fmt::format("sigma_n must be finite and >= 0, got {}", sigma_n));
  }
  return std::max(sigma_n, kMinSigma);
}

double residual(Measurement const &m, VideoTensor const &x) { return norm(m.op.apply(x) - m.y); }

void check_measurement(Measurement const &m)
{
  if (m.y.shape() != m.op.output_shape()) {
    throw ShapeError(fmt::format("measurement has shape {}, operator {} produces {}", to_string(m.y.shape()), m.op.spec(),
                                 to_string(m.op.output_shape())));
  }
  effective_sigma(m.sigma_n);
}

void check_timesteps(std::vector<int> const &ts, char const *field)
{
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i] <= 0) {
      throw std::invalid_argument(fmt::format("{}[{}] must be a positive timestep, got {}", field, i, ts[i]));
    }
  }
}

// Attach the sampler name and iteration to numerical failures.
template <class Fn>
auto at_iteration(char const *sampler, int k, Fn &&fn)
{
  try {
    return fn();
  } catch (SolverError const &e) {
    throw SolverError(fmt::format("{} iteration {}: {}", sampler, k, e.what()));
  }
}

struct Recorder
{
  Measurement const &m;
  TVWeights tv;
  RunReport report;
  Clock::time_point start = Clock::now();

  void record(int k, VideoTensor const &x)
  {
    report.iterations.push_back({k, residual(m, x), tv3(x, tv), report.nfe, elapsed_ms(start)});
  }

  RestoreResult finish(VideoTensor x)
  {
    report.wall_ms = elapsed_ms(start);
    return {std::move(x), std::move(report)};
  }
};

} // namespace

std::string to_string(TVSolver s) { return s == TVSolver::Pdhg ? "pdhg" : "adam"; }

std::string to_string(InitMode m) { return m == InitMode::File ? "file" : "pseudo-inverse"; }

void validate(SamplerConfig const &cfg)
{
  check_timesteps(cfg.vcm_timesteps, "sampler.vcm_timesteps");
  check_timesteps(cfg.icm_timesteps, "sampler.icm_timesteps");
  if (!(cfg.step_vcm > 0.0) || !std::isfinite(cfg.step_vcm)) {
    throw std::invalid_argument(fmt::format("sampler.step_vcm must be positive, got {}", cfg.step_vcm));
  }
  if (!(cfg.step_icm > 0.0) || !std::isfinite(cfg.step_icm)) {
    throw std::invalid_argument(fmt::format("sampler.step_icm must be positive, got {}", cfg.step_icm));
  }
  validate(cfg.tv);
  validate(cfg.cg);
  validate(cfg.adam);
  if (cfg.pdhg.iters < 1) {
    throw std::invalid_argument(fmt::format("pdhg.iters must be >= 1, got {}", cfg.pdhg.iters));
  }
  if (cfg.tv_solver == TVSolver::Pdhg && !cfg.tv.pure_temporal()) {
    throw std::invalid_argument("sampler.tv_solver: pdhg needs tv.lambda_h = tv.lambda_v = 0; use adam");
  }
  if (cfg.init == InitMode::File && !cfg.init_tensor) {
    throw std::invalid_argument("sampler.init = file but no init tensor was supplied");
  }
}

VideoTensor initial_iterate(Measurement const &m, SamplerConfig const &cfg)
{
  if (cfg.init == InitMode::File) {
    if (!cfg.init_tensor) {
      throw std::invalid_argument("sampler.init = file but no init tensor was supplied");
    }
    if (cfg.init_tensor->shape() != m.op.input_shape()) {
      throw ShapeError(fmt::format("init tensor has shape {}, operator expects {}", to_string(cfg.init_tensor->shape()),
                                   to_string(m.op.input_shape())));
    }
    return *cfg.init_tensor;
  }
  return pseudo_inverse_init(m.op, m.y);
}

VideoTensor likelihood_tv_prox(Measurement const &m, VideoTensor const &u, double delta, SamplerConfig const &cfg)
{
  double const sigma = effective_sigma(m.sigma_n);
  if (cfg.tv.all_zero()) {
    return prox_quadratic(m.op, m.y, u, delta / (sigma * sigma), cfg.cg);
  }
  if (cfg.tv_solver == TVSolver::Pdhg) {
    return prox_tv_data_pdhg(m.op, m.y, sigma, u, cfg.tv, delta, cfg.pdhg, cfg.cg).x;
  }
  return prox_tv_data_adam(m.op, m.y, sigma, u, cfg.tv, delta, cfg.adam);
}

VideoTensor framewise_sae_step(Prior const &prior, VideoTensor const &x, int t, std::uint64_t seed)
{
  prior.schedule().check_timestep(t);
  VideoTensor out(x.shape());
  parallel_for(x.shape().frames, [&](std::size_t f) {
    out.set_frame(f, sae_step(prior, x.frame_tensor(f), t, derive_seed(seed, {f})));
  });
  return out;
}

RestoreResult latino_restore(Measurement const &m, Prior const *vcm, Prior const &icm, SamplerConfig const &cfg)
{
  validate(cfg);
  check_measurement(m);
  bool const use_vcm = vcm != nullptr;
  std::size_t const n = use_vcm ? cfg.vcm_timesteps.size() : cfg.icm_timesteps.size();
  if (use_vcm && cfg.icm_timesteps.size() + 1 != n) {
    throw std::invalid_argument(fmt::format("sampler.icm_timesteps needs {} entries (one fewer than vcm_timesteps), got {}",
                                            n - 1, cfg.icm_timesteps.size()));
  }
  if (n == 0) {
    throw std::invalid_argument("sampler needs at least one timestep");
  }
  double const sigma = effective_sigma(m.sigma_n);
  double const eps_icm = cfg.step_icm / (sigma * sigma);

  Recorder rec{m, cfg.tv, {}};
  rec.report.sampler = use_vcm ? "latino" : "latino-icm";
  rec.report.init = to_string(cfg.init);
  VideoTensor x = initial_iterate(m, cfg);
  rec.report.initial_residual = residual(m, x);

  for (std::size_t k = 0; k < n; ++k) {
    int const ki = static_cast<int>(k);
    x = at_iteration(rec.report.sampler.c_str(), ki, [&] {
      VideoTensor x_half = x;
      if (use_vcm) {
        auto const u = sae_step(*vcm, x, cfg.vcm_timesteps[k], derive_seed(cfg.seed, {kVcmStream, k}));
        ++rec.report.nfe;
        x_half = likelihood_tv_prox(m, u, cfg.step_vcm, cfg);
        if (k + 1 == n) {
          return x_half;
        }
      }
      auto const u = framewise_sae_step(icm, x_half, cfg.icm_timesteps[k], derive_seed(cfg.seed, {kIcmStream, k}));
      ++rec.report.nfe;
      return prox_quadratic(m.op, m.y, u, eps_icm, cfg.cg);
    });
    rec.record(ki, x);
  }
  return rec.finish(std::move(x));
}

RestoreResult latino_v_restore(Measurement const &m, Prior const &vcm, SamplerConfig const &cfg)
{
  validate(cfg);
  check_measurement(m);
  if (cfg.vcm_timesteps.empty()) {
    throw std::invalid_argument("sampler.vcm_timesteps must not be empty");
  }
  Recorder rec{m, cfg.tv, {}};
  rec.report.sampler = "latino-v";
  rec.report.init = to_string(cfg.init);
  VideoTensor x = initial_iterate(m, cfg);
  rec.report.initial_residual = residual(m, x);

  for (std::size_t k = 0; k < cfg.vcm_timesteps.size(); ++k) {
    int const ki = static_cast<int>(k);
    x = at_iteration("latino-v", ki, [&] {
      auto const u = sae_step(vcm, x, cfg.vcm_timesteps[k], derive_seed(cfg.seed, {kVcmStream, k}));
      ++rec.report.nfe;
      return likelihood_tv_prox(m, u, cfg.step_vcm, cfg);
    });
    rec.record(ki, x);
  }
  return rec.finish(std::move(x));
}

RestoreResult latino_image_restore(Measurement const &m, Prior const &icm, SamplerConfig const &cfg)
{
  validate(cfg);
  check_measurement(m);
  if (m.op.input_shape().frames != 1) {
    throw ShapeError(fmt::format("latino-image restores a single frame, operator input is {}",
                                 to_string(m.op.input_shape())));
  }
  if (cfg.icm_timesteps.empty()) {
    throw std::invalid_argument("sampler.icm_timesteps must not be empty");
  }
  double const sigma = effective_sigma(m.sigma_n);
  double const eps = cfg.step_icm / (sigma * sigma);

  Recorder rec{m, cfg.tv, {}};
  rec.report.sampler = "latino-image";
  rec.report.init = to_string(cfg.init);
  VideoTensor x = initial_iterate(m, cfg);
  rec.report.initial_residual = residual(m, x);

  for (std::size_t k = 0; k < cfg.icm_timesteps.size(); ++k) {
    int const ki = static_cast<int>(k);
    x = at_iteration("latino-image", ki, [&] {
      // Same noise stream as frame 0 of the video sampler's ICM step.
      auto const seed = derive_seed(derive_seed(cfg.seed, {kIcmStream, k}), {std::size_t{0}});
      auto const u = sae_step(icm, x, cfg.icm_timesteps[k], seed);
      ++rec.report.nfe;
      return prox_quadratic(m.op, m.y, u, eps, cfg.cg);
    });
    rec.record(ki, x);
  }
  return rec.finish(std::move(x));
}

// ---------------------------------------------------------------------------

void validate(VisionXLConfig const &cfg)
{
  if (!(cfg.rho_fraction > 0.0 && cfg.rho_fraction < 1.0)) {
    throw std::invalid_argument(fmt::format("vxl.rho_fraction must lie in (0, 1), got {}", cfg.rho_fraction));
  }
  if (cfg.inversion_steps < 1) {
    throw std::invalid_argument(fmt::format("vxl.inversion_steps must be >= 1, got {}", cfg.inversion_steps));
  }
  if (cfg.sampling_steps < 2) {
    throw std::invalid_argument(fmt::format("vxl.sampling_steps must be >= 2, got {}", cfg.sampling_steps));
  }
  if (cfg.cg_iters < 1) {
    throw std::invalid_argument(fmt::format("vxl.cg_iters must be >= 1, got {}", cfg.cg_iters));
  }
  if (!(cfg.sigma_max >= 0.0)) {
    throw std::invalid_argument(fmt::format("vxl.sigma_max must be >= 0, got {}", cfg.sigma_max));
  }
}

int vision_xl_start(VisionXLConfig const &cfg, AlphaSchedule const &schedule)
{
  auto const rho = static_cast<int>(std::lround(cfg.rho_fraction * schedule.total_steps()));
  return std::clamp(rho, 1, schedule.total_steps() - 1);
}

std::vector<int> vision_xl_timesteps(VisionXLConfig const &cfg, AlphaSchedule const &schedule)
{
  int const rho = vision_xl_start(cfg, schedule);
  std::vector<int> ts;
  int const n = cfg.sampling_steps;
  for (int j = 0; j < n; ++j) {
    double const frac = static_cast<double>(j) / static_cast<double>(n - 1);
    int const t = static_cast<int>(std::lround(rho - frac * (rho - 1)));
    if (ts.empty() || t < ts.back()) {
      ts.push_back(t);
    }
  }
  return ts;
}

VideoTensor tweedie_denoise(VideoTensor const &z, VideoTensor const &eps, double alpha_bar)
{
  require_same_shape(z, eps, "tweedie_denoise");
  auto out = z;
  axpy(-std::sqrt(1.0 - alpha_bar), eps, out);
  out *= 1.0 / std::sqrt(alpha_bar);
  return out;
}

namespace {

VideoTensor checked_eps(Prior const &prior, VideoTensor const &z, int t)
{
  auto eps = prior.predict_eps(z, t);
  if (eps.shape() != z.shape()) {
    throw ShapeError(fmt::format("prior '{}' returned eps of shape {} for latent {}", prior.name(), to_string(eps.shape()),
                                 to_string(z.shape())));
  }
  return eps;
}

// x + argmin over the l-step Krylov space of ‖y − A(x + e)‖², by CG on AᵀA e = Aᵀ(y − Ax).
VideoTensor data_consistency(LinearOp const &A, VideoTensor const &y, VideoTensor const &x, int iters)
{
  auto const b = A.adjoint(y - A.apply(x));
  auto M = [&](VideoTensor const &v) { return A.normal(v); };
  auto e = cg_solve(M, b, VideoTensor(x.shape()), CGParams{iters, 1e-12}).x;
  e += x;
  return e;
}

} // namespace

RestoreResult vision_xl_restore(Measurement const &m, Prior const &prior, VisionXLConfig const &cfg)
{
  validate(cfg);
  check_measurement(m);
  if (!prior.has_eps_predictor()) {
    throw std::invalid_argument(fmt::format("vision-xl needs a prior with an eps predictor; '{}' has none", prior.name()));
  }
  auto const &sched = prior.schedule();
  int const rho = vision_xl_start(cfg, sched);
  auto const ts = vision_xl_timesteps(cfg, sched);

  Recorder rec{m, TVWeights{}, {}};
  rec.report.sampler = "vision-xl";
  rec.report.init = "ddim-inversion";
  auto const x0 = pseudo_inverse_init(m.op, m.y);
  rec.report.initial_residual = residual(m, x0);

  // Deterministic DDIM from t = 0 (ᾱ = 1) up to ρ over a strided grid.
  auto z = prior.encode(x0);
  int prev = 0;
  for (int i = 1; i <= cfg.inversion_steps; ++i) {
    int const next = static_cast<int>(std::lround(static_cast<double>(i) * rho / cfg.inversion_steps));
    if (next <= prev) {
      continue;
    }
    auto const eps = at_iteration("vision-xl inversion", i, [&] { return checked_eps(prior, z, next); });
    ++rec.report.nfe;
    double const a_prev = prev == 0 ? 1.0 : sched.alpha_bar(prev);
    double const a_next = sched.alpha_bar(next);
    auto z0 = tweedie_denoise(z, eps, a_prev);
    z0 *= std::sqrt(a_next);
    axpy(std::sqrt(1.0 - a_next), eps, z0);
    z = std::move(z0);
    prev = next;
  }

  int const outer = static_cast<int>(ts.size()) - 1;
  VideoTensor x;
  for (int j = 0; j <= outer; ++j) {
    int const t = ts[static_cast<std::size_t>(j)];
    double const a = sched.alpha_bar(t);
    auto const eps = at_iteration("vision-xl", j, [&] { return checked_eps(prior, z, t); });
    ++rec.report.nfe;
    x = prior.decode(tweedie_denoise(z, eps, a));
    rec.record(j, x);
    if (j == outer) {
      break;
    }
    x = at_iteration("vision-xl", j, [&] { return data_consistency(m.op, m.y, x, cfg.cg_iters); });
    double const sigma_t = outer > 1 ? cfg.sigma_max * static_cast<double>(outer - 1 - j) / (outer - 1) : 0.0;
    if (sigma_t > 0.0) {
      x = gaussian_blur(x, sigma_t, 0.0);
    }
    auto zbar = prior.encode(x);
    int const t_next = ts[static_cast<std::size_t>(j + 1)];
    double const a_next = sched.alpha_bar(t_next);
    // One noise frame shared by the whole pseudo-batch.
    auto frame_shape = zbar.shape();
    frame_shape.frames = 1;
    auto const shared = gaussian_noise(frame_shape, derive_seed(cfg.seed, {kRenoiseStream, static_cast<std::uint64_t>(j)}));
    zbar *= std::sqrt(a_next);
    double const c = std::sqrt(1.0 - a_next);
    for (std::size_t f = 0; f < zbar.shape().frames; ++f) {
      auto fr = zbar.frame(f);
      for (std::size_t i = 0; i < fr.size(); ++i) {
        fr[i] += c * shared[i];
      }
    }
    z = std::move(zbar);
  }
  return rec.finish(std::move(x));
}

// ---------------------------------------------------------------------------

void validate(AdmmConfig const &cfg)
{
  validate(cfg.tv);
  validate(cfg.cg);
  if (!(cfg.rho > 0.0) || !std::isfinite(cfg.rho)) {
    throw std::invalid_argument(fmt::format("admm.rho must be positive, got {}", cfg.rho));
  }
  if (cfg.iters < 1) {
    throw std::invalid_argument(fmt::format("admm.iters must be >= 1, got {}", cfg.iters));
  }
}

void group_soft_threshold(GradField &g, double threshold)
{
  for (std::size_t i = 0; i < g.h.size(); ++i) {
    double const n = std::sqrt(g.h[i] * g.h[i] + g.v[i] * g.v[i] + g.t[i] * g.t[i]);
    double const scale = n > threshold ? 1.0 - threshold / n : 0.0;
    g.h[i] *= scale;
    g.v[i] *= scale;
    g.t[i] *= scale;
  }
}

namespace {

void add_scaled(GradField &a, double s, GradField const &b)
{
  for (std::size_t i = 0; i < a.h.size(); ++i) {
    a.h[i] += s * b.h[i];
    a.v[i] += s * b.v[i];
    a.t[i] += s * b.t[i];
  }
}

} // namespace

AdmmResult admm_tv_restore(Measurement const &m, AdmmConfig const &cfg)
{
  validate(cfg);
  check_measurement(m);
  double const sigma = effective_sigma(m.sigma_n);
  double const inv_var = 1.0 / (sigma * sigma);
  auto const &A = m.op;
  auto const Aty = A.adjoint(m.y);

  Recorder rec{m, cfg.tv, {}};
  rec.report.sampler = "admm-tv";
  rec.report.init = "pseudo-inverse";
  VideoTensor x = pseudo_inverse_init(A, m.y);
  rec.report.initial_residual = residual(m, x);

  AdmmResult out;
  auto d = grad3(x, cfg.tv);
  GradField b(x.shape());
  auto M = [&](VideoTensor const &v) {
    auto r = A.normal(v);
    r *= inv_var;
    if (!cfg.tv.all_zero()) {
      axpy(cfg.rho, div3(grad3(v, cfg.tv), cfg.tv), r);
    }
    return r;
  };

  for (int k = 0; k < cfg.iters; ++k) {
    x = at_iteration("admm-tv", k, [&] {
      auto rhs = Aty;
      rhs *= inv_var;
      if (!cfg.tv.all_zero()) {
        auto db = d;
        add_scaled(db, -1.0, b);
        axpy(cfg.rho, div3(db, cfg.tv), rhs);
      }
      return cg_refine(M, rhs, x, cfg.cg).x;
    });
    auto Dx = grad3(x, cfg.tv);
    d = Dx;
    add_scaled(d, 1.0, b);
    group_soft_threshold(d, 1.0 / cfg.rho);
    auto r = Dx;
    add_scaled(r, -1.0, d);
    add_scaled(b, 1.0, r);

    out.primal_residuals.push_back(std::sqrt(r.squared_norm()));
    double const res = residual(m, x);
    out.objectives.push_back(0.5 * inv_var * res * res + tv3(x, cfg.tv));
    rec.record(k, x);
  }
  auto fin = rec.finish(std::move(x));
  out.x = std::move(fin.x);
  out.report = std::move(fin.report);
  return out;
}

// ---------------------------------------------------------------------------

std::string serialize(RunReport const &r)
{
  std::string s = "# lavino run report\n";
  s += fmt::format("sampler {}\n", r.sampler);
  s += fmt::format("init {}\n", r.init);
  s += fmt::format("nfe {}\n", r.nfe);
  s += fmt::format("initial_residual {:.17g}\n", r.initial_residual);
  s += fmt::format("wall_ms {:.17g}\n", r.wall_ms);
  s += "k residual tv nfe ms\n";
  for (auto const &it : r.iterations) {
    s += fmt::format("{} {:.17g} {:.17g} {} {:.17g}\n", it.k, it.residual, it.tv, it.nfe, it.ms);
  }
  return s;
}

RunReport parse_report(std::string const &text)
{
  RunReport r;
  std::istringstream in(text);
  std::string line;
  bool table = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') {
      continue;
    }
    std::istringstream ls(line);
    if (table) {
      IterationRecord it;
      if (!(ls >> it.k >> it.residual >> it.tv >> it.nfe >> it.ms)) {
        throw std::invalid_argument(fmt::format("report line {}: malformed iteration record", lineno));
      }
      r.iterations.push_back(it);
      continue;
    }
    std::string key;
    ls >> key;
    bool ok = true;
    if (key == "sampler") {
      ok = static_cast<bool>(ls >> r.sampler);
    } else if (key == "init") {
      ok = static_cast<bool>(ls >> r.init);
    } else if (key == "nfe") {
      ok = static_cast<bool>(ls >> r.nfe);
    } else if (key == "initial_residual") {
      ok = static_cast<bool>(ls >> r.initial_residual);
    } else if (key == "wall_ms") {
      ok = static_cast<bool>(ls >> r.wall_ms);
    } else if (key == "k") {
      table = true;
    } else {
      throw std::invalid_argument(fmt::format("report line {}: unknown key '{}'", lineno, key));
    }
    if (!ok) {
      throw std::invalid_argument(fmt::format("report line {}: missing value for '{}'", lineno, key));
    }
  }
  return r;
}

} // namespace lavino
