// SPDX-License-Identifier: Apache-2.0
#include "lavino/prox.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>

namespace lavino {

void validate(CGParams const &p)
{
  if (p.max_iters < 1) {
    throw std::invalid_argument(fmt::format("cg.iters must be >= 1, got {}", p.max_iters));
  }
  if (!(p.tol > 0.0)) {
    throw std::invalid_argument(fmt::format("cg.tol must be > 0, got {}", p.tol));
  }
}

void validate(AdamParams const &p)
{
  if (!(p.lr > 0.0)) {
    throw std::invalid_argument(fmt::format("adam.lr must be > 0, got {}", p.lr));
  }
  if (p.iters < 1) {
    throw std::invalid_argument(fmt::format("adam.iters must be >= 1, got {}", p.iters));
  }
}

CGResult cg_solve(SpdOperator const &M, VideoTensor const &b, VideoTensor x0, CGParams const &p)
{
  validate(p);
  require_same_shape(b, x0, "cg_solve");
  CGResult res;
  double const bnorm = norm(b);
  if (bnorm == 0.0) {
    res.x = VideoTensor(b.shape());
    res.converged = true;
    res.residuals.push_back(0.0);
    return res;
  }

  res.x = std::move(x0);
  auto r = b - M(res.x);
  double rr = squared_norm(r);
  res.residuals.push_back(std::sqrt(rr));
  if (std::sqrt(rr) <= p.tol * bnorm) {
    res.converged = true;
    return res;
  }

  auto dir = r;
  for (int k = 0; k < p.max_iters; ++k) {
    auto const Md = M(dir);
    double const curvature = dot(dir, Md);
    if (!std::isfinite(curvature) || curvature <= 0.0) {
      throw SolverError(fmt::format("cg: non-positive or non-finite curvature {} at iteration {}", curvature, k));
    }
    double const alpha = rr / curvature;
    axpy(alpha, dir, res.x);
    axpy(-alpha, Md, r);
    double const rr_next = squared_norm(r);
    if (!std::isfinite(rr_next)) {
      throw SolverError(fmt::format("cg: non-finite residual at iteration {}", k));
    }
    res.iterations = k + 1;
    res.residuals.push_back(std::sqrt(rr_next));
    if (std::sqrt(rr_next) <= p.tol * bnorm) {
      res.converged = true;
      break;
    }
    double const beta = rr_next / rr;
    rr = rr_next;
    dir *= beta;
    dir += r;
  }
  return res;
}

CGResult cg_refine(SpdOperator const &M, VideoTensor const &b, VideoTensor const &x0, CGParams const &p)
{
  validate(p);
  require_same_shape(b, x0, "cg_refine");
  auto const r0 = b - M(x0);
  double const bnorm = norm(b);
  double const r0norm = norm(r0);
  if (r0norm == 0.0 || bnorm == 0.0) {
    CGResult res;
    res.x = bnorm == 0.0 ? VideoTensor(b.shape()) : x0;
    res.converged = true;
    res.residuals.push_back(0.0);
    return res;
  }
  CGParams inner = p;
  inner.tol = p.tol * std::min(1.0, bnorm / r0norm);
  auto res = cg_solve(M, r0, VideoTensor(b.shape()), inner);
  res.x += x0;
  return res;
}

CGResult prox_quadratic_solve(LinearOp const &A, VideoTensor const &y, VideoTensor const &u, double epsilon,
                              CGParams const &p, std::optional<VideoTensor> warm)
{
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument(fmt::format("prox_quadratic: epsilon must be positive and finite, got {}", epsilon));
  }
  if (u.shape() != A.input_shape()) {
    throw ShapeError(fmt::format("prox_quadratic: u has shape {}, operator expects {}", to_string(u.shape()),
                                 to_string(A.input_shape())));
  }
  auto b = u;
  axpy(epsilon, A.adjoint(y), b);
  auto M = [&](VideoTensor const &x) {
    auto out = x;
    axpy(epsilon, A.normal(x), out);
    return out;
  };
  return cg_refine(M, b, warm ? *warm : u, p);
}

VideoTensor prox_quadratic(LinearOp const &A, VideoTensor const &y, VideoTensor const &u, double epsilon,
                           CGParams const &p)
{
  return prox_quadratic_solve(A, y, u, epsilon, p).x;
}

// ---------------------------------------------------------------------------

TVDataObjective::TVDataObjective(LinearOp const &op, VideoTensor const &y, double sigma_n, VideoTensor const &anchor,
                                 TVWeights weights, double delta_eta, double trust_drop_threshold)
  : op_(op)
  , y_(y)
  , sigma_n_(sigma_n)
  , anchor_(anchor)
  , weights_(weights)
  , delta_eta_(delta_eta)
  , keep_trust_(delta_eta < trust_drop_threshold)
{
  validate(weights);
  if (!(sigma_n > 0.0)) {
    throw std::invalid_argument(fmt::format("TV data term needs sigma_n > 0, got {}", sigma_n));
  }
  if (!(delta_eta > 0.0)) {
    throw std::invalid_argument(fmt::format("delta_eta must be > 0, got {}", delta_eta));
  }
  if (y.shape() != op.output_shape() || anchor.shape() != op.input_shape()) {
    throw ShapeError("TV data objective: measurement or anchor does not match the operator");
  }
}

double TVDataObjective::data_value(VideoTensor const &x) const
{
  double v = 0.5 * squared_norm(op_.apply(x) - y_) / (sigma_n_ * sigma_n_);
  if (keep_trust_) {
    v += 0.5 * squared_norm(x - anchor_) / delta_eta_;
  }
  return v;
}

VideoTensor TVDataObjective::data_gradient(VideoTensor const &x) const
{
  auto g = op_.adjoint(op_.apply(x) - y_);
  g *= 1.0 / (sigma_n_ * sigma_n_);
  if (keep_trust_) {
    axpy(1.0 / delta_eta_, x - anchor_, g);
  }
  return g;
}

double TVDataObjective::smoothed_value(VideoTensor const &x, double mu) const
{
  auto const g = grad3(x, weights_);
  double tv = 0.0;
  for (std::size_t i = 0; i < g.h.size(); ++i) {
    tv += std::sqrt(g.h[i] * g.h[i] + g.v[i] * g.v[i] + g.t[i] * g.t[i] + mu * mu) - mu;
  }
  return data_value(x) + tv;
}

VideoTensor TVDataObjective::smoothed_gradient(VideoTensor const &x, double mu) const
{
  auto g = grad3(x, weights_);
  for (std::size_t i = 0; i < g.h.size(); ++i) {
    double const n = std::sqrt(g.h[i] * g.h[i] + g.v[i] * g.v[i] + g.t[i] * g.t[i] + mu * mu);
    if (n > 0.0) {
      g.h[i] /= n;
      g.v[i] /= n;
      g.t[i] /= n;
    }
  }
  auto out = data_gradient(x);
  out += div3(g, weights_);
  return out;
}

// ---------------------------------------------------------------------------

PDHGResult prox_tv_data_pdhg(LinearOp const &A, VideoTensor const &y, double sigma_n, VideoTensor const &u,
                             TVWeights const &w, double delta_eta, PDHGParams const &p, CGParams const &cg)
{
  TVDataObjective const obj(A, y, sigma_n, u, w, delta_eta);
  if (!w.pure_temporal()) {
    throw std::invalid_argument("PDHG handles pure temporal TV only (lambda_h = lambda_v = 0); use the Adam solver");
  }
  if (p.iters < 1) {
    throw std::invalid_argument(fmt::format("pdhg.iters must be >= 1, got {}", p.iters));
  }
  double const inv_var = 1.0 / (sigma_n * sigma_n);

  PDHGResult res;
  if (w.all_zero()) {
    res.x = prox_quadratic(A, y, u, delta_eta * inv_var, cg);
    res.dual = GradField(u.shape());
    return res;
  }

  res.operator_norm = grad3_norm_estimate(u.shape(), w, p.norm_iters);
  res.rho = p.rho > 0.0 ? p.rho : 0.99 / res.operator_norm;
  res.sigma = p.sigma > 0.0 ? p.sigma : 0.99 / res.operator_norm;
  if (res.rho * res.sigma * res.operator_norm * res.operator_norm >= 1.0) {
    throw std::invalid_argument(fmt::format("PDHG steps violate rho*sigma*|D|^2 < 1: rho={} sigma={} |D|={}", res.rho,
                                            res.sigma, res.operator_norm));
  }

  double const rho = res.rho;
  double const sig = res.sigma;
  bool const trust = obj.keeps_trust_term();
  double const trust_coef = trust ? rho / delta_eta : 0.0;

  // prox_{ρf}(z): ((1 + ρ/δη) I + (ρ/σ²) AᵀA) x = z + ρ Aᵀy/σ² + (ρ/δη) anchor
  auto const Aty = A.adjoint(y);
  auto M = [&](VideoTensor const &x) {
    auto out = (1.0 + trust_coef) * x;
    axpy(rho * inv_var, A.normal(x), out);
    return out;
  };

  VideoTensor x = u;
  VideoTensor xbar = u;
  GradField dual(u.shape());
  for (int k = 0; k < p.iters; ++k) {
    auto const g = grad3(xbar, w);
    for (std::size_t i = 0; i < g.h.size(); ++i) {
      double const qh = dual.h[i] + sig * g.h[i];
      double const qv = dual.v[i] + sig * g.v[i];
      double const qt = dual.t[i] + sig * g.t[i];
      double const scale = 1.0 / std::max(1.0, std::sqrt(qh * qh + qv * qv + qt * qt));
      dual.h[i] = qh * scale;
      dual.v[i] = qv * scale;
      dual.t[i] = qt * scale;
    }

    auto rhs = x;
    axpy(-rho, div3(dual, w), rhs);
    axpy(rho * inv_var, Aty, rhs);
    if (trust) {
      axpy(trust_coef, u, rhs);
    }
    // The solution's null(A) part is rhs/(1 + trust_coef); start there so only the
    // range part, which the residual can see, is left to CG.
    auto next = cg_refine(M, rhs, (1.0 / (1.0 + trust_coef)) * rhs, cg).x;
    if (!next.all_finite()) {
      throw SolverError(fmt::format("pdhg: non-finite primal iterate at iteration {}", k));
    }

    xbar = next;
    xbar *= 1.0 + p.theta;
    axpy(-p.theta, x, xbar);
    x = std::move(next);
    res.iterations = k + 1;
  }
  res.x = std::move(x);
  res.dual = std::move(dual);
  return res;
}

VideoTensor prox_tv_data_adam(LinearOp const &A, VideoTensor const &y, double sigma_n, VideoTensor const &u,
                              TVWeights const &w, double delta_eta, AdamParams const &p)
{
  validate(p);
  TVDataObjective const obj(A, y, sigma_n, u, w, delta_eta);
  VideoTensor x = u;
  VideoTensor m(u.shape());
  VideoTensor v(u.shape());
  for (int k = 1; k <= p.iters; ++k) {
    auto const g = obj.smoothed_gradient(x, p.smoothing);
    if (!g.all_finite()) {
      throw SolverError(fmt::format("adam: non-finite gradient at iteration {}", k));
    }
    double const c1 = 1.0 - std::pow(p.beta1, k);
    double const c2 = 1.0 - std::pow(p.beta2, k);
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * g[i];
      v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * g[i] * g[i];
      x[i] -= p.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + p.eps);
    }
  }
  return x;
}

} // namespace lavino
