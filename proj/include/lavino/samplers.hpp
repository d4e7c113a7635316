// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lavino/operators.hpp"
#include "lavino/priors.hpp"
#include "lavino/prox.hpp"
#include "lavino/regularizers.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lavino {

/// y = A x + n with its noise level. Holds references.
struct Measurement
{
  VideoTensor const &y;
  LinearOp const &op;
  double sigma_n;
};

/// Noise levels below this are treated as this value inside likelihood terms.
inline constexpr double kMinSigma = 1e-6;

enum class TVSolver
{
  Pdhg,
  Adam,
};

enum class InitMode
{
  PseudoInverse,
  File,
};

std::string to_string(TVSolver s);
std::string to_string(InitMode m);

struct SamplerConfig
{
  std::vector<int> vcm_timesteps{757, 522, 375, 255, 125};
  std::vector<int> icm_timesteps{374, 249, 124, 63};
  double step_vcm = 1e5; // ηδ
  double step_icm = 1e5; // (1 − η)δ
  TVWeights tv{};
  TVSolver tv_solver = TVSolver::Pdhg;
  CGParams cg{};
  PDHGParams pdhg{};
  AdamParams adam{};
  std::uint64_t seed = 0;
  InitMode init = InitMode::PseudoInverse;
  std::optional<VideoTensor> init_tensor; // required when init == File
};

/// Field-addressed checks shared by all split samplers.
void validate(SamplerConfig const &cfg);

struct IterationRecord
{
  int k = 0;
  double residual = 0.0; // ‖A x_k − y‖
  double tv = 0.0;       // tv3(x_k, cfg.tv)
  int nfe = 0;           // cumulative
  double ms = 0.0;       // cumulative wall time
};

struct RunReport
{
  std::string sampler;
  std::string init;
  int nfe = 0;
  double initial_residual = 0.0;
  double wall_ms = 0.0;
  std::vector<IterationRecord> iterations;
};

std::string serialize(RunReport const &r);
RunReport parse_report(std::string const &text);

struct RestoreResult
{
  VideoTensor x;
  RunReport report;
};

/// x₀ from the config: the init tensor for file init, A†y otherwise.
VideoTensor initial_iterate(Measurement const &m, SamplerConfig const &cfg);

/* Likelihood step argmin (1/2σ²)‖Ax − y‖² + TV3_λ(x) + (1/2δ)‖x − u‖², routed to
 * prox_quadratic when λ = 0 and to PDHG or Adam otherwise.
 */
VideoTensor likelihood_tv_prox(Measurement const &m, VideoTensor const &u, double delta, SamplerConfig const &cfg);

/* Video split sampler: VCM SAE step, TV likelihood step, then (except on the
 * final iteration) a per-frame ICM SAE step and a quadratic likelihood step.
 * A null vcm runs the ICM/quadratic pair only, with len(icm_timesteps) iterations.
 */
RestoreResult latino_restore(Measurement const &m, Prior const *vcm, Prior const &icm, SamplerConfig const &cfg);

/// VCM SAE step followed by one likelihood step, len(vcm_timesteps) iterations.
RestoreResult latino_v_restore(Measurement const &m, Prior const &vcm, SamplerConfig const &cfg);

/// Single-image loop over icm_timesteps: SAE step, quadratic likelihood step.
RestoreResult latino_image_restore(Measurement const &m, Prior const &icm, SamplerConfig const &cfg);

/// SAE step applied independently to every frame; frame t draws noise from derive_seed(seed, {t}).
VideoTensor framewise_sae_step(Prior const &prior, VideoTensor const &x, int t, std::uint64_t seed);

struct VisionXLConfig
{
  double rho_fraction = 0.3;
  int inversion_steps = 10;
  int sampling_steps = 8; // timesteps from ρ down to 1, the last one being the final Tweedie step
  int cg_iters = 5;
  double sigma_max = 2.0; // low-pass width at the first outer step, in pixels
  std::uint64_t seed = 0;
};

void validate(VisionXLConfig const &cfg);

/// round(rho_fraction · total_steps), clamped into the schedule.
int vision_xl_start(VisionXLConfig const &cfg, AlphaSchedule const &schedule);

/// Sampling timesteps, strictly decreasing from the start step to 1.
std::vector<int> vision_xl_timesteps(VisionXLConfig const &cfg, AlphaSchedule const &schedule);

/// z − √(1 − ᾱ_t) ε̂ over √ᾱ_t.
VideoTensor tweedie_denoise(VideoTensor const &z, VideoTensor const &eps, double alpha_bar);

/* DDIM inversion, Tweedie denoising with l CG data-consistency steps,
 * scheduled low-pass filtering and renoising with noise shared across frames.
 * Iteration records hold the residual of each Tweedie estimate.
 */
RestoreResult vision_xl_restore(Measurement const &m, Prior const &prior, VisionXLConfig const &cfg);

struct AdmmConfig
{
  TVWeights tv{};
  double rho = 1e3;
  int iters = 50;
  CGParams cg{};
};

void validate(AdmmConfig const &cfg);

/// Shrinks the per-voxel 3-vector (h, v, t) towards 0 by `threshold` in ℓ2.
void group_soft_threshold(GradField &g, double threshold);

struct AdmmResult
{
  VideoTensor x;
  RunReport report;
  std::vector<double> primal_residuals; // ‖D x − d‖ per iteration
  std::vector<double> objectives;       // (1/2σ²)‖Ax − y‖² + tv3(x)
};

/// ADMM on (1/2σ²)‖Ax − y‖² + TV3_λ(x) with the split d = D_λ x, started from A†y.
AdmmResult admm_tv_restore(Measurement const &m, AdmmConfig const &cfg);

} // namespace lavino
