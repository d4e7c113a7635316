// SPDX-License-Identifier: Apache-2.0
#include "../oracles.hpp"

#include "lavino/priors.hpp"

#include <doctest.h>

#include <cmath>

using namespace lavino;

namespace {

GaussianPriorSpec scalar_spec(double mu, double s) { return {VideoTensor(Shape{1, 1, 1, 1}, mu), s}; }

VideoTensor scalar(double v) { return VideoTensor(Shape{1, 1, 1, 1}, v); }

} // namespace

TEST_SUITE("priors")
{
  TEST_CASE("linear beta schedule")
  {
    AlphaSchedule const s;
    CHECK(s.total_steps() == 1000);
    CHECK(s.beta(0) == doctest::Approx(1e-4));
    CHECK(s.beta(999) == doctest::Approx(0.02));
    double prod = 1.0;
    for (int t = 0; t <= 500; ++t) {
      prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * t / 999.0);
    }
    CHECK(s.alpha_bar(500) == doctest::Approx(prod).epsilon(1e-12));
    CHECK_THROWS_AS(s.check_timestep(0), std::out_of_range);
    CHECK_THROWS_AS(s.check_timestep(1000), std::out_of_range);
    CHECK_NOTHROW(s.check_timestep(999));
  }

  TEST_CASE("gaussian consistency matches the probability-flow ODE")
  {
    AlphaSchedule const sched;
    for (auto [mu, s] : {std::pair{0.0, 2.0}, std::pair{0.3, 0.5}, std::pair{-1.0, 1.5}}) {
      for (int t : {125, 375, 757}) {
        for (double z : {-2.0, 0.1, 1.7}) {
          double const a = sched.alpha_bar(t);
          double const got = gaussian_consistency(scalar(z), t, scalar_spec(mu, s), sched)[0];
          CAPTURE(t);
          CAPTURE(z);
          CHECK(std::abs(got - oracle::pf_ode_endpoint(z, a, mu, s)) <= 1e-4);
        }
      }
    }
  }

  TEST_CASE("gaussian consistency special cases")
  {
    AlphaSchedule const sched;
    auto const z = gaussian_noise(Shape{2, 3, 3, 1}, 1);
    CHECK(max_abs_diff(gaussian_consistency(z, 400, scalar_spec(0.0, 1.0), sched), z) <= 1e-15);
    double const a = sched.alpha_bar(300);
    CHECK(gaussian_consistency(scalar(std::sqrt(a) * 0.7), 300, scalar_spec(0.7, 3.0), sched)[0] ==
          doctest::Approx(0.7));
  }

  TEST_CASE("eps prediction matches conditional Monte Carlo")
  {
    AlphaSchedule const sched;
    for (auto [mu, s, t, z] : {std::tuple{0.0, 1.0, 400, 0.8}, std::tuple{0.5, 2.0, 200, -0.4}}) {
      double const a = sched.alpha_bar(t);
      double const mc = oracle::conditional_eps_mc(z, a, mu, s, 0.01, 1000000, 17);
      double const got = gaussian_eps_predict(scalar(z), t, scalar_spec(mu, s), sched)[0];
      CHECK(std::abs(got - mc) <= 0.03);
    }
    // Standard normal target: ε̂ = √(1 − ᾱ) z.
    double const a = sched.alpha_bar(600);
    CHECK(gaussian_eps_predict(scalar(1.3), 600, scalar_spec(0, 1), sched)[0] == doctest::Approx(std::sqrt(1 - a) * 1.3));
    CHECK(gaussian_eps_predict(scalar(0.0), 600, scalar_spec(0, 1), sched)[0] == 0.0);
  }

  TEST_CASE("Tweedie round trip")
  {
    AlphaSchedule const sched;
    auto const spec = scalar_spec(0.2, 1.7);
    auto const z = gaussian_noise(Shape{1, 4, 4, 2}, 3);
    for (int t : {10, 300, 900}) {
      double const a = sched.alpha_bar(t);
      auto back = gaussian_posterior_mean(z, t, spec, sched);
      back *= std::sqrt(a);
      axpy(std::sqrt(1 - a), gaussian_eps_predict(z, t, spec, sched), back);
      CHECK(max_abs_diff(back, z) <= 1e-12);
    }
  }

  TEST_CASE("SAE step")
  {
    AlphaSchedule const sched;
    IdentityPrior const id;
    auto const x = gaussian_noise(Shape{2, 4, 4, 1}, 2);
    CHECK(max_abs_diff(sae_step_with_alpha(id, x, 10, 1.0, 5), x) == 0.0);
    CHECK(max_abs_diff(sae_step(id, x, 500, 7), sae_step(id, x, 500, 7)) == 0.0);
    CHECK(max_abs_diff(sae_step(id, x, 500, 7), sae_step(id, x, 500, 8)) > 0.0);
    CHECK_THROWS_AS(sae_step(id, x, 0, 1), std::out_of_range);
    CHECK_THROWS_AS(sae_step(id, x, 1000, 1), std::out_of_range);
  }

  TEST_CASE("repeated SAE steps forget the start under a standard normal prior")
  {
    GaussianPrior const prior(scalar_spec(0.0, 1.0));
    Shape const s{1, 2, 2, 1};
    VideoTensor mean(s);
    int const chains = 1000;
    for (int c = 0; c < chains; ++c) {
      VideoTensor x(s, 3.0);
      for (int k = 0; k < 20; ++k) {
        x = sae_step(prior, x, 757, static_cast<std::uint64_t>(c * 100 + k));
      }
      axpy(1.0 / chains, x, mean);
    }
    CHECK(norm(mean) <= 0.1 * std::sqrt(double(s.size())));
  }

  TEST_CASE("one SAE step preserves the gaussian target")
  {
    auto const spec = scalar_spec(0.3, 2.0);
    GaussianPrior const prior(spec);
    Shape const s{1, 50, 50, 4};
    auto x = gaussian_noise(s, 11);
    x *= 2.0;
    for (auto &v : x.data()) {
      v += 0.3;
    }
    auto const out = sae_step(prior, x, 400, 12);
    double m = 0, m2 = 0;
    for (double v : out.data()) {
      m += v;
      m2 += v * v;
    }
    m /= double(out.size());
    double const var = m2 / double(out.size()) - m * m;
    CHECK(m == doctest::Approx(0.3).epsilon(0.1));
    CHECK(var == doctest::Approx(4.0).epsilon(0.05));
  }

  TEST_CASE("smoothing consistency")
  {
    AlphaSchedule const sched;
    for (int t : {50, 400, 900}) {
      double const a = sched.alpha_bar(t);
      auto const out = smoothing_consistency(VideoTensor(Shape{5, 9, 9, 3}, 0.6), t, sched);
      for (double v : out.data()) {
        CHECK(v * std::sqrt(a) == doctest::Approx(0.6).epsilon(1e-12));
      }
    }
    auto const z = gaussian_noise(Shape{3, 8, 8, 1}, 4);
    auto const out = smoothing_consistency(z, 1, sched);
    CHECK(out.shape() == z.shape());
    CHECK(max_abs_diff(out, z) <= 0.1);
  }

  TEST_CASE("gaussian kernels")
  {
    for (double sigma : {0.0, 0.3, 1.0, 2.5}) {
      auto const k = gaussian_kernel(sigma);
      double sum = 0;
      for (double v : k) {
        sum += v;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(k.size() % 2 == 1);
    }
    CHECK(gaussian_kernel(0.0).size() == 1);
    CHECK(gaussian_kernel(1.0).size() == 7);
    auto const x = gaussian_noise(Shape{2, 5, 5, 1}, 9);
    CHECK(max_abs_diff(gaussian_blur(x, 0.0, 0.0), x) == 0.0);
  }

  TEST_CASE("priors expose eps prediction only when they have it")
  {
    CHECK(GaussianPrior(scalar_spec(0, 1)).has_eps_predictor());
    CHECK_FALSE(SmoothingPrior().has_eps_predictor());
    CHECK_THROWS(SmoothingPrior().predict_eps(scalar(0.0), 10));
  }
}
