// SPDX-License-Identifier: Apache-2.0
#include "lavino/metrics.hpp"

#include <fmt/core.h>

#include <cmath>
#include <numeric>
#include <sstream>

namespace lavino {

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_pair(VideoTensor const &x, VideoTensor const &ref)
{
  if (x.shape() != ref.shape()) {
    throw ShapeError(fmt::format("metric inputs differ in shape: {} vs {}", to_string(x.shape()), to_string(ref.shape())));
  }
}

double mean(std::vector<double> const &v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

std::vector<double> window_1d()
{
  std::vector<double> w(kWindow);
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    double const d = i - kWindow / 2;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (auto &v : w) {
    v /= sum;
  }
  return w;
}

// Valid-region separable filtering of one channel plane (rows × cols, stride `channels`).
std::vector<double> filter_valid(std::span<double const> plane, std::size_t rows, std::size_t cols, std::size_t channels,
                                 std::size_t c, std::vector<double> const &w)
{
  std::size_t const orows = rows - kWindow + 1;
  std::size_t const ocols = cols - kWindow + 1;
  std::vector<double> tmp(rows * ocols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < ocols; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) {
        acc += w[k] * plane[(i * cols + j + k) * channels + c];
      }
      tmp[i * ocols + j] = acc;
    }
  }
  std::vector<double> out(orows * ocols);
  for (std::size_t i = 0; i < orows; ++i) {
    for (std::size_t j = 0; j < ocols; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) {
        acc += w[k] * tmp[(i + k) * ocols + j];
      }
      out[i * ocols + j] = acc;
    }
  }
  return out;
}

} // namespace

std::vector<double> psnr_frames(VideoTensor const &x, VideoTensor const &ref)
{
  check_pair(x, ref);
  std::vector<double> out;
  for (std::size_t t = 0; t < x.shape().frames; ++t) {
    auto const a = x.frame(t);
    auto const b = ref.frame(t);
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      se += (a[i] - b[i]) * (a[i] - b[i]);
    }
    double const mse = se / static_cast<double>(a.size());
    out.push_back(mse == 0.0 ? kPsnrCap : std::min(kPsnrCap, -10.0 * std::log10(mse)));
  }
  return out;
}

double psnr(VideoTensor const &x, VideoTensor const &ref) { return mean(psnr_frames(x, ref)); }

std::vector<double> ssim_frames(VideoTensor const &x, VideoTensor const &ref)
{
  check_pair(x, ref);
  auto const &s = x.shape();
  if (s.height < kWindow || s.width < kWindow) {
    throw ShapeError(fmt::format("ssim needs frames of at least {}x{}, got {}x{}", kWindow, kWindow, s.height, s.width));
  }
  auto const w = window_1d();
  std::vector<double> out;
  std::vector<double> xx(s.frame_size()), yy(s.frame_size()), xy(s.frame_size());
  for (std::size_t t = 0; t < s.frames; ++t) {
    auto const a = x.frame(t);
    auto const b = ref.frame(t);
    for (std::size_t i = 0; i < a.size(); ++i) {
      xx[i] = a[i] * a[i];
      yy[i] = b[i] * b[i];
      xy[i] = a[i] * b[i];
    }
    double total = 0.0;
    for (std::size_t c = 0; c < s.channels; ++c) {
      auto const mx = filter_valid(a, s.height, s.width, s.channels, c, w);
      auto const my = filter_valid(b, s.height, s.width, s.channels, c, w);
      auto const sxx = filter_valid(xx, s.height, s.width, s.channels, c, w);
      auto const syy = filter_valid(yy, s.height, s.width, s.channels, c, w);
      auto const sxy = filter_valid(xy, s.height, s.width, s.channels, c, w);
      double acc = 0.0;
      for (std::size_t i = 0; i < mx.size(); ++i) {
        double const vx = sxx[i] - mx[i] * mx[i];
        double const vy = syy[i] - my[i] * my[i];
        double const cxy = sxy[i] - mx[i] * my[i];
        acc += ((2.0 * mx[i] * my[i] + kC1) * (2.0 * cxy + kC2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2));
      }
      total += acc / static_cast<double>(mx.size());
    }
    out.push_back(total / static_cast<double>(s.channels));
  }
  return out;
}

double ssim(VideoTensor const &x, VideoTensor const &ref) { return mean(ssim_frames(x, ref)); }

MetricReport evaluate(VideoTensor const &x, VideoTensor const &ref)
{
  MetricReport r;
  r.psnr_per_frame = psnr_frames(x, ref);
  r.ssim_per_frame = ssim_frames(x, ref);
  r.psnr = mean(r.psnr_per_frame);
  r.ssim = mean(r.ssim_per_frame);
  return r;
}

std::string format_metrics(MetricReport const &r)
{
  std::string s = fmt::format("video {:.17g} {:.17g}\n", r.psnr, r.ssim);
  for (std::size_t t = 0; t < r.psnr_per_frame.size(); ++t) {
    s += fmt::format("frame {} {:.17g} {:.17g}\n", t, r.psnr_per_frame[t], r.ssim_per_frame[t]);
  }
  return s;
}

MetricReport parse_metrics(std::string const &text)
{
  MetricReport r;
  std::istringstream in(text);
  std::string line;
  bool have_video = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') {
      continue;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "video") {
      if (!(ls >> r.psnr >> r.ssim)) {
        throw std::invalid_argument("metrics: malformed video line");
      }
      have_video = true;
    } else if (key == "frame") {
      std::size_t t = 0;
      double p = 0.0, q = 0.0;
      if (!(ls >> t >> p >> q) || t != r.psnr_per_frame.size()) {
        throw std::invalid_argument(fmt::format("metrics: malformed frame line '{}'", line));
      }
      r.psnr_per_frame.push_back(p);
      r.ssim_per_frame.push_back(q);
    } else {
      throw std::invalid_argument(fmt::format("metrics: unknown record '{}'", key));
    }
  }
  if (!have_video) {
    throw std::invalid_argument("metrics: missing video line");
  }
  return r;
}

} // namespace lavino
