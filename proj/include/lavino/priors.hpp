// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lavino/tensor.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace lavino {

/// Linear-β DDPM schedule; ᾱ_t = Π_{i ≤ t} (1 − β_i) for integer t in [0, total_steps).
class AlphaSchedule
{
public:
  explicit AlphaSchedule(int total_steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

  int total_steps() const { return static_cast<int>(alpha_bar_.size()); }
  double beta(int t) const { return beta_.at(static_cast<std::size_t>(t)); }
  double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
  double beta_start() const { return beta_.front(); }
  double beta_end() const { return beta_.back(); }

  /// Rejects t outside the open interval (0, total_steps).
  void check_timestep(int t) const;

private:
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
};

/* Stochastic auto-encoder prior: codec (encode/decode), consistency function
 * and optionally an ε-predictor, all sharing one noise schedule.
 */
class Prior
{
public:
  virtual ~Prior() = default;

  virtual std::string name() const = 0;
  virtual AlphaSchedule const &schedule() const = 0;

  virtual VideoTensor encode(VideoTensor const &x) const { return x; }
  virtual VideoTensor decode(VideoTensor const &z) const { return z; }

  /// One-call estimate of the clean latent from z_t.
  virtual VideoTensor consistency(VideoTensor const &z, int t) const = 0;

  virtual bool has_eps_predictor() const { return false; }
  virtual VideoTensor predict_eps(VideoTensor const &z, int t) const;
};

/// 𝒟(f(√ᾱ_t ℰ(x) + √(1 − ᾱ_t) ε, t)) with ε drawn from `seed`.
VideoTensor sae_step(Prior const &prior, VideoTensor const &x, int t, std::uint64_t seed);

/// sae_step with an explicit ᾱ in [0, 1]; t is only forwarded to the consistency call.
VideoTensor sae_step_with_alpha(Prior const &prior, VideoTensor const &x, int t, double alpha_bar, std::uint64_t seed);

/// Consistency function f(z, t) = z.
class IdentityPrior : public Prior
{
public:
  explicit IdentityPrior(AlphaSchedule schedule = AlphaSchedule())
    : schedule_(std::move(schedule))
  {
  }
  std::string name() const override { return "identity"; }
  AlphaSchedule const &schedule() const override { return schedule_; }
  VideoTensor consistency(VideoTensor const &z, int t) const override;

private:
  AlphaSchedule schedule_;
};

/// N(μ, s² I) target. A single-element mean broadcasts over any shape.
struct GaussianPriorSpec
{
  VideoTensor mean = VideoTensor(Shape{1, 1, 1, 1}, 0.0);
  double stddev = 1.0;
};

/// Exact probability-flow endpoint for the Gaussian target.
VideoTensor gaussian_consistency(VideoTensor const &z, int t, GaussianPriorSpec const &spec,
                                 AlphaSchedule const &schedule);
/// E[z_0 | z_t] under the Gaussian target.
VideoTensor gaussian_posterior_mean(VideoTensor const &z, int t, GaussianPriorSpec const &spec,
                                    AlphaSchedule const &schedule);
/// ε̂ = (z_t − √ᾱ_t E[z_0 | z_t]) / √(1 − ᾱ_t).
VideoTensor gaussian_eps_predict(VideoTensor const &z, int t, GaussianPriorSpec const &spec,
                                 AlphaSchedule const &schedule);

class GaussianPrior : public Prior
{
public:
  explicit GaussianPrior(GaussianPriorSpec spec, AlphaSchedule schedule = AlphaSchedule());

  std::string name() const override { return "gaussian"; }
  AlphaSchedule const &schedule() const override { return schedule_; }
  GaussianPriorSpec const &spec() const { return spec_; }
  VideoTensor consistency(VideoTensor const &z, int t) const override;
  bool has_eps_predictor() const override { return true; }
  VideoTensor predict_eps(VideoTensor const &z, int t) const override;

private:
  GaussianPriorSpec spec_;
  AlphaSchedule schedule_;
};

/// Normalized Gaussian taps truncated at ceil(3σ); a single unit tap for σ ≈ 0.
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur with replicate boundaries; σ in pixels / frames.
VideoTensor gaussian_blur(VideoTensor const &x, double sigma_spatial, double sigma_temporal);

/// z/√ᾱ_t followed by a blur of spatial width 2√(1−ᾱ_t)/√ᾱ_t and half that in time.
VideoTensor smoothing_consistency(VideoTensor const &z, int t, AlphaSchedule const &schedule);

class SmoothingPrior : public Prior
{
public:
  explicit SmoothingPrior(AlphaSchedule schedule = AlphaSchedule())
    : schedule_(std::move(schedule))
  {
  }
  std::string name() const override { return "smoothing"; }
  AlphaSchedule const &schedule() const override { return schedule_; }
  VideoTensor consistency(VideoTensor const &z, int t) const override;

private:
  AlphaSchedule schedule_;
};

} // namespace lavino
