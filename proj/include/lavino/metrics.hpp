// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lavino/tensor.hpp"

#include <string>
#include <vector>

namespace lavino {

/// PSNR of identical frames.
inline constexpr double kPsnrCap = 100.0;

struct MetricReport
{
  double psnr = 0.0;
  double ssim = 0.0;
  std::vector<double> psnr_per_frame;
  std::vector<double> ssim_per_frame;
};

/// Per-frame 10·log10(1/MSE) with peak 1, capped at kPsnrCap.
std::vector<double> psnr_frames(VideoTensor const &x, VideoTensor const &ref);
double psnr(VideoTensor const &x, VideoTensor const &ref);

/* Single-scale SSIM: 11×11 Gaussian window (σ = 1.5), K1 = 0.01, K2 = 0.03,
 * dynamic range 1, averaged over the valid window positions and channels.
 */
std::vector<double> ssim_frames(VideoTensor const &x, VideoTensor const &ref);
double ssim(VideoTensor const &x, VideoTensor const &ref);

MetricReport evaluate(VideoTensor const &x, VideoTensor const &ref);

/// Text table: a "video psnr ssim" line, then one "frame t psnr ssim" line per frame.
std::string format_metrics(MetricReport const &r);
MetricReport parse_metrics(std::string const &text);

} // namespace lavino
