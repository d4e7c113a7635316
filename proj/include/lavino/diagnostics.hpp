// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lavino/operators.hpp"
#include "lavino/regularizers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace lavino {

/// |⟨Ax, y⟩ − ⟨x, Aᵀy⟩| / max(|⟨Ax, y⟩|, |⟨x, Aᵀy⟩|) for standard-normal x and y drawn from `seed`.
double dot_test_error(LinearOp const &op, std::uint64_t seed);

/// Same test with a caller-supplied adjoint, for checking hand-written or deliberately broken ones.
template <class Adjoint>
double dot_test_error(LinearOp const &op, Adjoint &&adjoint, std::uint64_t seed);

/// Dense column-major matrix of `op` (rows = output size, cols = input size).
std::vector<double> materialize(LinearOp const &op);

/// Small TV-regularized likelihood problem used to cross-check the PDHG and Adam solvers.
struct TVInstance
{
  LinearOp op;
  VideoTensor truth;
  VideoTensor y;
  VideoTensor u;
  double sigma_n = 0.0;
  TVWeights weights;
  double delta_eta = 0.0;
};

/* Identity operator on a (5, 8, 8, 1) smooth sinusoid, σ_n = 0.1, λ = (0, 0, 0.05),
 * δη = 1 so the trust term stays in. y and u carry 0.02 noise from seeds 3 and 4.
 */
TVInstance bundled_tv_instance();

template <class Adjoint>
double dot_test_error(LinearOp const &op, Adjoint &&adjoint, std::uint64_t seed)
{
  auto const x = gaussian_noise(op.input_shape(), seed);
  auto const y = gaussian_noise(op.output_shape(), seed ^ 0x9e3779b97f4a7c15ULL);
  double const lhs = dot(op.apply(x), y);
  double const rhs = dot(x, adjoint(y));
  double const scale = std::max(std::abs(lhs), std::abs(rhs));
  return scale == 0.0 ? 0.0 : std::abs(lhs - rhs) / scale;
}

} // namespace lavino
