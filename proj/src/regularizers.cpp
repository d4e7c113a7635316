// SPDX-License-Identifier: Apache-2.0
#include "lavino/regularizers.hpp"

#include <fmt/core.h>

#include <cmath>

namespace lavino {

void validate(TVWeights const &w)
{
  for (double l : {w.lambda_h, w.lambda_v, w.lambda_t}) {
    if (!(l >= 0.0) || !std::isfinite(l)) {
      throw std::invalid_argument(fmt::format("TV weights must be finite and >= 0, got ({}, {}, {})", w.lambda_h,
                                              w.lambda_v, w.lambda_t));
    }
  }
}

double GradField::dot(GradField const &o) const
{
  double s = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    s += h[i] * o.h[i] + v[i] * o.v[i] + t[i] * o.t[i];
  }
  return s;
}

GradField grad3(VideoTensor const &x, TVWeights const &w)
{
  auto const &s = x.shape();
  GradField g(s);
  std::size_t const step_t = s.frame_size();
  std::size_t const step_h = s.width * s.channels;
  std::size_t const step_w = s.channels;
  for (std::size_t t = 0; t < s.frames; ++t) {
    for (std::size_t h = 0; h < s.height; ++h) {
      for (std::size_t c0 = 0; c0 < step_h; ++c0) {
        std::size_t const i = t * step_t + h * step_h + c0;
        std::size_t const col = c0 / step_w;
        double const xi = x[i];
        g.h[i] = h + 1 < s.height ? w.lambda_h * (x[i + step_h] - xi) : 0.0;
        g.v[i] = col + 1 < s.width ? w.lambda_v * (x[i + step_w] - xi) : 0.0;
        g.t[i] = t + 1 < s.frames ? w.lambda_t * (x[i + step_t] - xi) : 0.0;
      }
    }
  }
  return g;
}

VideoTensor div3(GradField const &p, TVWeights const &w)
{
  auto const &s = p.shape;
  VideoTensor out(s);
  std::size_t const step_t = s.frame_size();
  std::size_t const step_h = s.width * s.channels;
  std::size_t const step_w = s.channels;
  // (Dᵀq)_i = q_{i-1} [i > 0] - q_i [i < n-1]
  for (std::size_t t = 0; t < s.frames; ++t) {
    for (std::size_t h = 0; h < s.height; ++h) {
      for (std::size_t c0 = 0; c0 < step_h; ++c0) {
        std::size_t const i = t * step_t + h * step_h + c0;
        std::size_t const col = c0 / step_w;
        double acc = 0.0;
        if (h + 1 < s.height) {
          acc -= w.lambda_h * p.h[i];
        }
        if (h > 0) {
          acc += w.lambda_h * p.h[i - step_h];
        }
        if (col + 1 < s.width) {
          acc -= w.lambda_v * p.v[i];
        }
        if (col > 0) {
          acc += w.lambda_v * p.v[i - step_w];
        }
        if (t + 1 < s.frames) {
          acc -= w.lambda_t * p.t[i];
        }
        if (t > 0) {
          acc += w.lambda_t * p.t[i - step_t];
        }
        out[i] = acc;
      }
    }
  }
  return out;
}

double tv3(VideoTensor const &x, TVWeights const &w)
{
  auto const g = grad3(x, w);
  double s = 0.0;
  for (std::size_t i = 0; i < g.h.size(); ++i) {
    s += std::sqrt(g.h[i] * g.h[i] + g.v[i] * g.v[i] + g.t[i] * g.t[i]);
  }
  return s;
}

double grad3_norm_estimate(Shape const &shape, TVWeights const &w, int iterations, std::uint64_t seed)
{
  if (w.all_zero()) {
    return 0.0;
  }
  auto x = gaussian_noise(shape, seed);
  x *= 1.0 / norm(x);
  double lambda = 0.0;
  for (int k = 0; k < iterations; ++k) {
    auto y = div3(grad3(x, w), w);
    lambda = norm(y);
    if (lambda == 0.0) {
      return 0.0;
    }
    x = (1.0 / lambda) * std::move(y);
  }
  return std::sqrt(lambda);
}

} // namespace lavino
