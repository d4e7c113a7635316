// SPDX-License-Identifier: Apache-2.0
#include "lavino/priors.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>

namespace lavino {

AlphaSchedule::AlphaSchedule(int total_steps, double beta_start, double beta_end)
{
  if (total_steps < 2) {
    throw std::invalid_argument(fmt::format("schedule needs at least 2 steps, got {}", total_steps));
  }
  if (!(beta_start > 0.0) || !(beta_end >= beta_start) || !(beta_end < 1.0)) {
    throw std::invalid_argument(
      fmt::format("schedule needs 0 < beta_start <= beta_end < 1, got {} and {}", beta_start, beta_end));
  }
  auto const n = static_cast<std::size_t>(total_steps);
  beta_.resize(n);
  alpha_bar_.resize(n);
  double prod = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    beta_[i] = beta_start + (beta_end - beta_start) * static_cast<double>(i) / static_cast<double>(n - 1);
    prod *= 1.0 - beta_[i];
    alpha_bar_[i] = prod;
  }
}

void AlphaSchedule::check_timestep(int t) const
{
  if (t <= 0 || t >= total_steps()) {
    throw std::out_of_range(fmt::format("timestep {} outside (0, {})", t, total_steps()));
  }
}

VideoTensor Prior::predict_eps(VideoTensor const &, int) const
{
  throw std::logic_error(fmt::format("prior '{}' has no eps predictor", name()));
}

VideoTensor sae_step_with_alpha(Prior const &prior, VideoTensor const &x, int t, double alpha_bar, std::uint64_t seed)
{
  if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) {
    throw std::invalid_argument(fmt::format("alpha_bar must lie in [0, 1], got {}", alpha_bar));
  }
  auto z = prior.encode(x);
  z *= std::sqrt(alpha_bar);
  if (alpha_bar < 1.0) {
    axpy(std::sqrt(1.0 - alpha_bar), gaussian_noise(z.shape(), seed), z);
  }
  auto const z0 = prior.consistency(z, t);
  if (z0.shape() != z.shape()) {
    throw ShapeError(fmt::format("prior '{}' returned latent {} for input {}", prior.name(), to_string(z0.shape()),
                                 to_string(z.shape())));
  }
  return prior.decode(z0);
}

VideoTensor sae_step(Prior const &prior, VideoTensor const &x, int t, std::uint64_t seed)
{
  prior.schedule().check_timestep(t);
  return sae_step_with_alpha(prior, x, t, prior.schedule().alpha_bar(t), seed);
}

VideoTensor IdentityPrior::consistency(VideoTensor const &z, int t) const
{
  schedule_.check_timestep(t);
  return z;
}

// ---------------------------------------------------------------------------

namespace {

void check_spec(GaussianPriorSpec const &spec, VideoTensor const &z)
{
  if (!(spec.stddev > 0.0)) {
    throw std::invalid_argument(fmt::format("gaussian prior stddev must be > 0, got {}", spec.stddev));
  }
  if (spec.mean.size() != 1 && spec.mean.shape() != z.shape()) {
    throw ShapeError(fmt::format("gaussian prior mean {} does not broadcast to {}", to_string(spec.mean.shape()),
                                 to_string(z.shape())));
  }
}

double mean_at(GaussianPriorSpec const &spec, std::size_t i) { return spec.mean.size() == 1 ? spec.mean[0] : spec.mean[i]; }

} // namespace

VideoTensor gaussian_consistency(VideoTensor const &z, int t, GaussianPriorSpec const &spec,
                                 AlphaSchedule const &schedule)
{
  schedule.check_timestep(t);
  check_spec(spec, z);
  double const a = schedule.alpha_bar(t);
  double const s = spec.stddev;
  double const factor = s / std::sqrt(a * s * s + 1.0 - a);
  double const sa = std::sqrt(a);
  VideoTensor out(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    double const mu = mean_at(spec, i);
    out[i] = mu + (z[i] - sa * mu) * factor;
  }
  return out;
}

VideoTensor gaussian_posterior_mean(VideoTensor const &z, int t, GaussianPriorSpec const &spec,
                                    AlphaSchedule const &schedule)
{
  schedule.check_timestep(t);
  check_spec(spec, z);
  double const a = schedule.alpha_bar(t);
  double const s2 = spec.stddev * spec.stddev;
  double const sa = std::sqrt(a);
  double const gain = sa * s2 / (a * s2 + 1.0 - a);
  VideoTensor out(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    double const mu = mean_at(spec, i);
    out[i] = mu + gain * (z[i] - sa * mu);
  }
  return out;
}

VideoTensor gaussian_eps_predict(VideoTensor const &z, int t, GaussianPriorSpec const &spec,
                                 AlphaSchedule const &schedule)
{
  auto out = gaussian_posterior_mean(z, t, spec, schedule);
  double const a = schedule.alpha_bar(t);
  double const sa = std::sqrt(a);
  double const inv = 1.0 / std::sqrt(1.0 - a);
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = (z[i] - sa * out[i]) * inv;
  }
  return out;
}

GaussianPrior::GaussianPrior(GaussianPriorSpec spec, AlphaSchedule schedule)
  : spec_(std::move(spec))
  , schedule_(std::move(schedule))
{
  if (!(spec_.stddev > 0.0)) {
    throw std::invalid_argument(fmt::format("gaussian prior stddev must be > 0, got {}", spec_.stddev));
  }
}

VideoTensor GaussianPrior::consistency(VideoTensor const &z, int t) const
{
  return gaussian_consistency(z, t, spec_, schedule_);
}

VideoTensor GaussianPrior::predict_eps(VideoTensor const &z, int t) const
{
  return gaussian_eps_predict(z, t, spec_, schedule_);
}

// ---------------------------------------------------------------------------

std::vector<double> gaussian_kernel(double sigma)
{
  if (!(sigma > 1e-6)) {
    return {1.0};
  }
  auto const radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    double const v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto &v : k) {
    v /= sum;
  }
  return k;
}

namespace {

// Convolve along one axis given its length and element stride; other axes enumerated by `outer`.
void blur_axis(VideoTensor &x, std::vector<double> const &kernel, std::size_t len, std::size_t stride)
{
  if (kernel.size() == 1 || len == 1) {
    return;
  }
  long const radius = static_cast<long>(kernel.size() / 2);
  std::vector<double> line(len);
  std::size_t const total = x.size();
  std::size_t const block = len * stride;
  for (std::size_t base = 0; base < total; base += block) {
    for (std::size_t inner = 0; inner < stride; ++inner) {
      std::size_t const start = base + inner;
      for (std::size_t i = 0; i < len; ++i) {
        line[i] = x[start + i * stride];
      }
      for (std::size_t i = 0; i < len; ++i) {
        double acc = 0.0;
        for (long o = -radius; o <= radius; ++o) {
          long const j = std::clamp(static_cast<long>(i) + o, 0L, static_cast<long>(len) - 1);
          acc += kernel[static_cast<std::size_t>(o + radius)] * line[static_cast<std::size_t>(j)];
        }
        x[start + i * stride] = acc;
      }
    }
  }
}

} // namespace

VideoTensor gaussian_blur(VideoTensor const &x, double sigma_spatial, double sigma_temporal)
{
  auto out = x;
  auto const &s = x.shape();
  auto const ks = gaussian_kernel(sigma_spatial);
  blur_axis(out, ks, s.width, s.channels);
  blur_axis(out, ks, s.height, s.width * s.channels);
  blur_axis(out, gaussian_kernel(sigma_temporal), s.frames, s.frame_size());
  return out;
}

VideoTensor smoothing_consistency(VideoTensor const &z, int t, AlphaSchedule const &schedule)
{
  schedule.check_timestep(t);
  double const a = schedule.alpha_bar(t);
  double const sigma = 2.0 * std::sqrt(1.0 - a) / std::sqrt(a);
  return gaussian_blur((1.0 / std::sqrt(a)) * z, sigma, 0.5 * sigma);
}

VideoTensor SmoothingPrior::consistency(VideoTensor const &z, int t) const
{
  return smoothing_consistency(z, t, schedule_);
}

} // namespace lavino
