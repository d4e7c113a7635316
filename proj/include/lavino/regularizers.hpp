// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lavino/tensor.hpp"

#include <cstdint>
#include <vector>

namespace lavino {

/* Anisotropic TV weights. lambda_h weights differences along the height
 * (row) axis, lambda_v along the width (column) axis, lambda_t along time.
 */
struct TVWeights
{
  double lambda_h = 0.0;
  double lambda_v = 0.0;
  double lambda_t = 0.0;

  bool all_zero() const { return lambda_h == 0.0 && lambda_v == 0.0 && lambda_t == 0.0; }
  bool pure_temporal() const { return lambda_h == 0.0 && lambda_v == 0.0; }
  double squared_sum() const { return lambda_h * lambda_h + lambda_v * lambda_v + lambda_t * lambda_t; }
};

void validate(TVWeights const &w);

/// Three difference components per voxel on the source grid.
struct GradField
{
  Shape shape{};
  std::vector<double> h, v, t;

  GradField() = default;
  explicit GradField(Shape s)
    : shape(s)
    , h(s.size())
    , v(s.size())
    , t(s.size())
  {
  }

  double dot(GradField const &o) const;
  double squared_norm() const { return dot(*this); }
};

/// D_λ x: weighted forward differences, zero on the last slice of each axis.
GradField grad3(VideoTensor const &x, TVWeights const &w);

/// D_λᵀ p, the exact adjoint of grad3.
VideoTensor div3(GradField const &p, TVWeights const &w);

/// Σ over voxels of ‖(D_λ x)_voxel‖₂, channels uncoupled.
double tv3(VideoTensor const &x, TVWeights const &w);

/// Power-iteration estimate of ‖D_λ‖ on tensors of the given shape.
double grad3_norm_estimate(Shape const &shape, TVWeights const &w, int iterations = 50, std::uint64_t seed = 7);

} // namespace lavino
