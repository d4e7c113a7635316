// SPDX-License-Identifier: Apache-2.0
#include "lavino/regularizers.hpp"

#include <doctest.h>

#include <cmath>

using namespace lavino;

TEST_SUITE("regularizers")
{
  TEST_CASE("div3 is the adjoint of grad3")
  {
    Shape const s{5, 6, 7, 2};
    TVWeights const w{0.3, 1.7, 0.05};
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto const x = gaussian_noise(s, seed);
      GradField p(s);
      auto const r = gaussian_noise(Shape{3 * s.frames, s.height, s.width, s.channels}, seed + 100);
      for (std::size_t i = 0; i < s.size(); ++i) {
        p.h[i] = r[i];
        p.v[i] = r[s.size() + i];
        p.t[i] = r[2 * s.size() + i];
      }
      double const lhs = grad3(x, w).dot(p);
      double const rhs = dot(x, div3(p, w));
      CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(lhs));
    }
  }

  TEST_CASE("axis conventions")
  {
    VideoTensor x(Shape{2, 2, 2, 1});
    x(0, 1, 0, 0) = 1.0; // one row down
    auto const g = grad3(x, TVWeights{1, 1, 1});
    CHECK(g.h[x.index(0, 0, 0, 0)] == 1.0);
    CHECK(g.v[x.index(0, 0, 0, 0)] == 0.0);
    CHECK(g.t[x.index(0, 1, 0, 0)] == -1.0);
    CHECK(g.h[x.index(0, 1, 0, 0)] == 0.0); // last row
  }

  TEST_CASE("tv3 values")
  {
    CHECK(tv3(VideoTensor(Shape{3, 4, 4, 3}, 0.7), TVWeights{1, 1, 1}) == 0.0);

    VideoTensor ramp(Shape{4, 1, 1, 1}, std::vector<double>{0, 1, 3, 6});
    CHECK(tv3(ramp, TVWeights{0, 0, 0.5}) == doctest::Approx(3.0));

    // One voxel with unit differences along all three axes: ℓ2 coupling.
    VideoTensor x(Shape{2, 2, 2, 1});
    x(1, 0, 0, 0) = 1;
    x(0, 1, 0, 0) = 1;
    x(0, 0, 1, 0) = 1;
    x(0, 0, 0, 0) = 0;
    TVWeights const w{2, 2, 2};
    double expect = 0.0;
    auto const g = grad3(x, w);
    for (std::size_t i = 0; i < x.size(); ++i) {
      expect += std::sqrt(g.h[i] * g.h[i] + g.v[i] * g.v[i] + g.t[i] * g.t[i]);
    }
    CHECK(tv3(x, w) == doctest::Approx(expect));
    CHECK(g.h[0] == 2.0);
    CHECK(g.v[0] == 2.0);
    CHECK(g.t[0] == 2.0);
  }

  TEST_CASE("channels are not coupled")
  {
    VideoTensor x(Shape{2, 1, 1, 2});
    x(1, 0, 0, 0) = 3;
    x(1, 0, 0, 1) = 4;
    CHECK(tv3(x, TVWeights{0, 0, 1}) == doctest::Approx(7.0));
  }

  TEST_CASE("operator norm estimate")
  {
    Shape const s{6, 8, 8, 1};
    TVWeights const w{0.5, 0.5, 1.0};
    double const est = grad3_norm_estimate(s, w, 200);
    CHECK(est <= 2.0 * std::sqrt(w.squared_sum()) + 1e-9);
    // ‖D‖ ≥ ‖λ_t D_t‖ = 2 cos(π / 2T) for T = 6 frames.
    CHECK(est >= 0.99 * 2.0 * std::cos(M_PI / 12));
  }

  TEST_CASE("invalid weights")
  {
    CHECK_THROWS_AS(validate(TVWeights{-1, 0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(validate(TVWeights{0, 0, NAN}), std::invalid_argument);
  }
}
