// SPDX-License-Identifier: Apache-2.0
#include "../oracles.hpp"

#include "lavino/metrics.hpp"

#include <doctest.h>

using namespace lavino;

namespace {

VideoTensor textured(Shape s, std::uint64_t seed)
{
  auto x = gaussian_noise(s, seed);
  for (auto &v : x.data()) {
    v = 0.5 + 0.2 * std::tanh(v);
  }
  return x;
}

} // namespace

TEST_SUITE("metrics")
{
  TEST_CASE("PSNR of a uniform 0.1 error is 20 dB")
  {
    VideoTensor const a(Shape{3, 8, 8, 3}, 0.5);
    VideoTensor const b(Shape{3, 8, 8, 3}, 0.4);
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
    for (double p : psnr_frames(a, b)) {
      CHECK(p == doctest::Approx(20.0).epsilon(1e-12));
    }
  }

  TEST_CASE("PSNR cap and shift invariance")
  {
    auto const x = textured(Shape{2, 12, 12, 1}, 1);
    CHECK(psnr(x, x) == kPsnrCap);
    auto const y = textured(Shape{2, 12, 12, 1}, 2);
    auto xs = x;
    auto ys = y;
    for (auto &v : xs.data()) {
      v += 0.05;
    }
    for (auto &v : ys.data()) {
      v += 0.05;
    }
    CHECK(psnr(xs, ys) == doctest::Approx(psnr(x, y)).epsilon(1e-12));
  }

  TEST_CASE("SSIM self identity and oracle agreement")
  {
    auto const x = textured(Shape{2, 20, 17, 3}, 3);
    CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    auto y = x;
    axpy(0.05, gaussian_noise(x.shape(), 4), y);
    auto const frames = ssim_frames(y, x);
    for (std::size_t f = 0; f < 2; ++f) {
      CHECK(std::abs(frames[f] - oracle::naive_ssim(y, x, f)) <= 1e-6);
    }
    CHECK(ssim(y, x) < 1.0);
  }

  TEST_CASE("shape errors")
  {
    VideoTensor const a(Shape{3, 16, 16, 1});
    VideoTensor const b(Shape{4, 16, 16, 1});
    CHECK_THROWS_WITH_AS(evaluate(a, b), doctest::Contains("(3,16,16,1)"), ShapeError);
    CHECK_THROWS_WITH_AS(evaluate(a, b), doctest::Contains("(4,16,16,1)"), ShapeError);
    CHECK_THROWS_AS(ssim(VideoTensor(Shape{1, 8, 8, 1}), VideoTensor(Shape{1, 8, 8, 1})), ShapeError);
  }

  TEST_CASE("metric table round trip")
  {
    auto const x = textured(Shape{3, 16, 16, 1}, 5);
    auto const y = textured(Shape{3, 16, 16, 1}, 6);
    auto const r = evaluate(x, y);
    auto const back = parse_metrics(format_metrics(r));
    CHECK(back.psnr == r.psnr);
    CHECK(back.ssim == r.ssim);
    REQUIRE(back.psnr_per_frame.size() == 3);
    for (std::size_t f = 0; f < 3; ++f) {
      CHECK(back.psnr_per_frame[f] == r.psnr_per_frame[f]);
      CHECK(back.ssim_per_frame[f] == r.ssim_per_frame[f]);
    }
  }
}
