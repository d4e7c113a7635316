// SPDX-License-Identifier: Apache-2.0
#include "../oracles.hpp"

#include "lavino/diagnostics.hpp"
#include "lavino/operators.hpp"

#include <doctest.h>

using namespace lavino;

TEST_SUITE("operators")
{
  TEST_CASE("adjoint dot tests")
  {
    Shape const s{9, 16, 16, 3};
    std::vector<LinearOp> const ops{
      LinearOp::identity(s),
      LinearOp::temporal_pool(4, s),
      LinearOp::temporal_pool(8, s),
      LinearOp::temporal_pool(2, s),
      LinearOp::spatial_pool(4, s),
      LinearOp::spatial_pool(8, s),
      LinearOp::temporal_circ_blur(7, s),
      LinearOp::temporal_circ_blur(3, s),
      problem_operator(Problem::A, s),
      problem_operator(Problem::B, s),
      problem_operator(Problem::C, s),
    };
    for (auto const &op : ops) {
      CAPTURE(op.spec());
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        CHECK(dot_test_error(op, seed) <= 1e-12);
      }
    }
  }

  TEST_CASE("temporal pool pads the tail with the last frame")
  {
    VideoTensor x(Shape{5, 1, 1, 1}, std::vector<double>{1, 2, 3, 4, 5});
    auto const y = LinearOp::temporal_pool(4, x.shape()).apply(x);
    REQUIRE(y.shape() == Shape{2, 1, 1, 1});
    CHECK(y[0] == doctest::Approx(2.5));
    CHECK(y[1] == doctest::Approx(5.0));
  }

  TEST_CASE("spatial pool averages blocks")
  {
    VideoTensor x(Shape{1, 2, 4, 1}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
    auto const y = LinearOp::spatial_pool(2, x.shape()).apply(x);
    REQUIRE(y.shape() == Shape{1, 1, 2, 1});
    CHECK(y[0] == doctest::Approx(3.5));
    CHECK(y[1] == doctest::Approx(5.5));
  }

  TEST_CASE("circular blur wraps around in time")
  {
    VideoTensor x(Shape{4, 1, 1, 1}, std::vector<double>{3, 0, 0, 0});
    auto const y = LinearOp::temporal_circ_blur(3, x.shape()).apply(x);
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] == doctest::Approx(1.0));
    CHECK(y[2] == doctest::Approx(0.0));
    CHECK(y[3] == doctest::Approx(1.0));
  }

  TEST_CASE("problem shapes on a 25-frame 768x1280 RGB input")
  {
    Shape const in{25, 768, 1280, 3};
    CHECK(problem_operator(Problem::A, in).output_shape() == Shape{7, 192, 320, 3});
    CHECK(problem_operator(Problem::B, in).output_shape() == Shape{25, 96, 160, 3});
    CHECK(problem_operator(Problem::C, in).output_shape() == Shape{4, 96, 160, 3});
    CHECK_THROWS_AS(problem_operator(Problem::A, Shape{25, 768, 1281, 3}), ShapeError);
  }

  TEST_CASE("operator specs round trip")
  {
    Shape const s{9, 16, 16, 1};
    for (auto p : {Problem::A, Problem::B, Problem::C}) {
      auto const op = problem_operator(p, s);
      auto const back = parse_operator(op.spec(), s);
      CHECK(back.stages() == op.stages());
      CHECK(back.output_shape() == op.output_shape());
    }
    CHECK_THROWS_AS(parse_operator("spatial-pool:x", s), std::invalid_argument);
    CHECK_THROWS_AS(parse_operator("warp:2", s), std::invalid_argument);
  }

  TEST_CASE("materialized matrix matches apply")
  {
    auto const op = parse_operator("temporal-circ-blur:3,spatial-pool:2", Shape{3, 4, 4, 1});
    auto const A = oracle::dense_matrix(op);
    auto const x = gaussian_noise(op.input_shape(), 4);
    Eigen::VectorXd const y = A * oracle::vec(x);
    CHECK((y - oracle::vec(op.apply(x))).norm() <= 1e-12);
    Eigen::VectorXd const z = A.transpose() * oracle::vec(op.apply(x));
    CHECK((z - oracle::vec(op.adjoint(op.apply(x)))).norm() <= 1e-12);
  }

  TEST_CASE("degrade is deterministic in the noise seed")
  {
    Shape const s{8, 8, 8, 1};
    auto const op = problem_operator(Problem::A, s);
    auto const x = gaussian_noise(s, 1);
    auto const a = degrade(op, x, NoiseSpec{0.01, 5});
    auto const b = degrade(op, x, NoiseSpec{0.01, 5});
    auto const c = degrade(op, x, NoiseSpec{0.01, 6});
    CHECK(max_abs_diff(a, b) == 0.0);
    CHECK(max_abs_diff(a, c) > 0.0);
    CHECK(max_abs_diff(degrade(op, x, NoiseSpec{0.0, 5}), op.apply(x)) == 0.0);
  }

  TEST_CASE("pseudo-inverse start reproduces constant measurements")
  {
    Shape const s{9, 16, 16, 2};
    for (auto p : {Problem::A, Problem::B, Problem::C}) {
      auto const op = problem_operator(p, s);
      VideoTensor const y(op.output_shape(), 0.37);
      auto const x0 = pseudo_inverse_init(op, y);
      CHECK(x0.shape() == s);
      CHECK(max_abs_diff(x0, VideoTensor(s, 0.37)) <= 1e-12);
      CHECK(max_abs_diff(op.apply(x0), y) <= 1e-12);
    }
  }

  TEST_CASE("pseudo-inverse replicates pooled frames")
  {
    auto const op = LinearOp::temporal_pool(4, Shape{8, 3, 3, 1});
    VideoTensor y(op.output_shape());
    for (std::size_t j = 0; j < 2; ++j) {
      for (auto &v : y.frame(j)) {
        v = double(j);
      }
    }
    auto const x0 = pseudo_inverse_init(op, y);
    for (std::size_t t = 0; t < 8; ++t) {
      for (auto v : x0.frame(t)) {
        CHECK(v == double(t / 4));
      }
    }
  }

  TEST_CASE("bilinear upsampling preserves constants")
  {
    auto const up = bilinear_upsample(VideoTensor(Shape{2, 3, 3, 1}, 0.4), 4);
    CHECK(up.shape() == Shape{2, 12, 12, 1});
    for (double v : up.data()) {
      CHECK(v == doctest::Approx(0.4));
    }
  }
}
