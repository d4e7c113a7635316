// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lavino/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lavino {

enum class StageKind
{
  Identity,
  TemporalPool,     // average groups of `factor` frames, tail padded with the last frame
  SpatialPool,      // average factor x factor blocks
  TemporalCircBlur, // centered uniform window of `factor` frames, circular in time
};

/// One shape-free building block of a degradation operator.
struct OpStage
{
  StageKind kind = StageKind::Identity;
  std::size_t factor = 1;

  bool operator==(OpStage const &) const = default;
};

std::string to_string(OpStage const &s);
OpStage parse_stage(std::string const &text);

/* Linear degradation operator bound to an input shape. Stages are stored in
 * application order; compose(outer, inner) yields outer ∘ inner.
 */
class LinearOp
{
public:
  LinearOp() = default;
  LinearOp(std::vector<OpStage> stages, Shape input);

  static LinearOp identity(Shape input);
  static LinearOp temporal_pool(std::size_t k, Shape input);
  static LinearOp spatial_pool(std::size_t s, Shape input);
  static LinearOp temporal_circ_blur(std::size_t w, Shape input);
  static LinearOp compose(LinearOp const &outer, LinearOp const &inner);

  Shape const &input_shape() const { return shapes_.front(); }
  Shape const &output_shape() const { return shapes_.back(); }
  std::vector<OpStage> const &stages() const { return stages_; }

  VideoTensor apply(VideoTensor const &x) const;
  VideoTensor adjoint(VideoTensor const &y) const;
  /// Aᵀ A x
  VideoTensor normal(VideoTensor const &x) const { return adjoint(apply(x)); }

  /// Comma separated stages in application order, e.g. "temporal-pool:4,spatial-pool:4".
  std::string spec() const;

private:
  friend VideoTensor pseudo_inverse_init(LinearOp const &op, VideoTensor const &y);

  std::vector<OpStage> stages_;
  std::vector<Shape> shapes_{Shape{}}; // shapes_[i] is the input of stage i; back() is the output
};

LinearOp parse_operator(std::string const &spec, Shape input);

/// Output shape of a single stage, throwing on indivisible spatial dims.
Shape stage_output_shape(OpStage const &stage, Shape const &input);

VideoTensor apply_stage(OpStage const &stage, VideoTensor const &x);
VideoTensor adjoint_stage(OpStage const &stage, VideoTensor const &y, Shape const &input);

struct NoiseSpec
{
  double sigma_n = 0.0;
  std::uint64_t seed = 0;
};

/// y = A x + sigma_n * n with n standard normal drawn from noise.seed.
VideoTensor degrade(LinearOp const &op, VideoTensor const &x, NoiseSpec const &noise);

/* Full-resolution starting point: temporal pooling is inverted by frame
 * replication, spatial pooling by bilinear upsampling, blur by identity.
 */
VideoTensor pseudo_inverse_init(LinearOp const &op, VideoTensor const &y);

/// Bilinear upsampling of every frame by an integer factor (half-pixel centres, edge clamped).
VideoTensor bilinear_upsample(VideoTensor const &x, std::size_t factor);

enum class Problem
{
  A, // temporal-pool 4, spatial-pool 4
  B, // temporal blur 7, spatial-pool 8
  C, // temporal-pool 8, spatial-pool 8
};

Problem parse_problem(std::string const &name);
char problem_letter(Problem p);
std::vector<OpStage> problem_stages(Problem p);
LinearOp problem_operator(Problem p, Shape input);

} // namespace lavino
