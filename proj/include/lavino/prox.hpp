// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lavino/operators.hpp"
#include "lavino/regularizers.hpp"

#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

namespace lavino {

/// Numerical failure inside an iterative solver (non-finite values, indefinite system).
class SolverError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct CGParams
{
  int max_iters = 10;
  double tol = 1e-6; // on ‖r‖ / ‖b‖
};

struct CGResult
{
  VideoTensor x;
  int iterations = 0;
  bool converged = false;
  std::vector<double> residuals; // ‖r_k‖, starting with the warm-start residual
};

using SpdOperator = std::function<VideoTensor(VideoTensor const &)>;

void validate(CGParams const &p);

/// Conjugate gradients on M x = b from x0; M must be symmetric positive definite.
CGResult cg_solve(SpdOperator const &M, VideoTensor const &b, VideoTensor x0, CGParams const &p);

/* Warm-started CG run on the correction system M e = b − M x0 from e = 0,
 * stopping once ‖r‖ ≤ tol · min(‖b‖, ‖b − M x0‖). When b is dominated by a
 * large data term the plain ‖b‖-relative test accepts x0 unchanged; this one
 * still resolves the part of the solution that x0 gets wrong.
 */
CGResult cg_refine(SpdOperator const &M, VideoTensor const &b, VideoTensor const &x0, CGParams const &p);

/* argmin_x (ε/2)‖Ax − y‖² + ½‖x − u‖², i.e. (Id + εAᵀA)x = u + εAᵀy.
 * CG starts from `warm` when given, otherwise from u. Starting from u keeps every
 * update in range(Aᵀ), so the null-space part of u is carried over exactly. For
 * large ε the residual cannot see null-space error in a warm start, so `warm`
 * should agree with u there.
 */
CGResult prox_quadratic_solve(LinearOp const &A, VideoTensor const &y, VideoTensor const &u, double epsilon,
                              CGParams const &p, std::optional<VideoTensor> warm = std::nullopt);
VideoTensor prox_quadratic(LinearOp const &A, VideoTensor const &y, VideoTensor const &u, double epsilon,
                           CGParams const &p);

/* f(x) + TV3_λ(x) with f(x) = (1/2σ²)‖Ax − y‖² + (1/2δη)‖x − anchor‖².
 * The trust term is dropped when δη reaches `trust_drop_threshold`.
 * Holds references; the referenced tensors must outlive the objective.
 */
class TVDataObjective
{
public:
  static constexpr double kTrustDropThreshold = 1e5;

  TVDataObjective(LinearOp const &op, VideoTensor const &y, double sigma_n, VideoTensor const &anchor,
                  TVWeights weights, double delta_eta, double trust_drop_threshold = kTrustDropThreshold);

  LinearOp const &op() const { return op_; }
  VideoTensor const &measurement() const { return y_; }
  VideoTensor const &anchor() const { return anchor_; }
  TVWeights const &weights() const { return weights_; }
  double sigma_n() const { return sigma_n_; }
  double delta_eta() const { return delta_eta_; }
  bool keeps_trust_term() const { return keep_trust_; }

  /// Smooth part f(x).
  double data_value(VideoTensor const &x) const;
  /// ∇f(x) = Aᵀ(Ax − y)/σ² + (x − anchor)/δη.
  VideoTensor data_gradient(VideoTensor const &x) const;

  double value(VideoTensor const &x) const { return data_value(x) + tv3(x, weights_); }

  /// TV replaced by Σ sqrt(‖g‖² + μ²) − μ.
  double smoothed_value(VideoTensor const &x, double mu) const;
  VideoTensor smoothed_gradient(VideoTensor const &x, double mu) const;

private:
  LinearOp const &op_;
  VideoTensor const &y_;
  double sigma_n_;
  VideoTensor const &anchor_;
  TVWeights weights_;
  double delta_eta_;
  bool keep_trust_;
};

struct PDHGParams
{
  int iters = 200;
  double rho = 0.0;   // primal step; 0 selects 0.99 / ‖D_λ‖
  double sigma = 0.0; // dual step; 0 selects 0.99 / ‖D_λ‖
  double theta = 1.0;
  int norm_iters = 50; // power iterations for ‖D_λ‖
};

struct PDHGResult
{
  VideoTensor x;
  GradField dual;
  int iterations = 0;
  double rho = 0.0;
  double sigma = 0.0;
  double operator_norm = 0.0;
};

/* Chambolle–Pock on the TV-regularized likelihood subproblem. Only the pure
 * temporal case (λ_h = λ_v = 0) is accepted. All-zero weights reduce to
 * prox_quadratic with ε = δη/σ².
 */
PDHGResult prox_tv_data_pdhg(LinearOp const &A, VideoTensor const &y, double sigma_n, VideoTensor const &u,
                             TVWeights const &w, double delta_eta, PDHGParams const &p, CGParams const &cg);

struct AdamParams
{
  double lr = 1e-3;
  int iters = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double smoothing = 1e-8; // μ in the smoothed TV
};

void validate(AdamParams const &p);

/// Adam on the smoothed objective, started from u.
VideoTensor prox_tv_data_adam(LinearOp const &A, VideoTensor const &y, double sigma_n, VideoTensor const &u,
                              TVWeights const &w, double delta_eta, AdamParams const &p);

} // namespace lavino
