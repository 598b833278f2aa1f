#include "mol/mol_solver.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mol/errors.hpp"

namespace mol {

namespace {

SolveOptions solve_options(const MolConfig& cfg) {
  SolveOptions o;
  o.cg = cfg.cg;
  return o;
}

ComplexImage apply_q(const OperatorSpec& spec, const MolConfig& cfg, const ComplexImage& v) {
  auto r = solve_normal(spec, v, cfg.alpha * cfg.lambda, solve_options(cfg));
  if (!r.converged) {
    throw SolverError("inner solve stalled at relative residual " + std::to_string(r.relative_residual));
  }
  return std::move(r.x);
}

double relative_change(const ComplexImage& next, const ComplexImage& prev) {
  ComplexImage d = next - prev;
  return norm(d) / (norm(prev) + kResidualEps);
}

}  // namespace

void MolConfig::validate() const {
  if (!(alpha >= 0.0 && std::isfinite(alpha))) throw std::invalid_argument("alpha must be finite and >= 0");
  if (!(lambda > 0.0 && std::isfinite(lambda))) throw std::invalid_argument("lambda must be > 0");
  if (!(m > 0.0 && m < 1.0)) throw std::invalid_argument("m must lie in (0, 1)");
  if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be > 0");
  if (max_iter_forward < 1 || max_iter_backward < 1) throw std::invalid_argument("iteration caps must be >= 1");
  if (!(lambda0 > 0.0)) throw std::invalid_argument("lambda0 must be > 0");
  if (!(cg.tol > 0.0) || cg.max_iter < 1) throw std::invalid_argument("bad CG options");
}

double alpha_max(double m) {
  if (!(m > 0.0 && m <= 1.0)) throw std::invalid_argument("alpha_max: m must lie in (0, 1]");
  return 2.0 * m / ((2.0 - m) * (2.0 - m));
}

double lipschitz_R(double m, double alpha) {
  const double radicand = 1.0 - 2.0 * alpha * m + alpha * alpha * (2.0 - m) * (2.0 - m);
  if (radicand < 0.0) throw InfeasibleError("lipschitz_R: negative radicand " + std::to_string(radicand));
  return std::sqrt(radicand);
}

double lipschitz_T(double m, double alpha, double lambda, double mu_min) {
  return lipschitz_R(m, alpha) / (1.0 + lambda * mu_min);
}

ComplexImage t_mol_apply(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                         const ComplexImage& x, const ComplexImage& b) {
  if (x.shape() != spec.image_shape) {
    throw ShapeError("t_mol_apply: x is " + shape_string(x.shape()) + ", operator expects " +
                     shape_string(spec.image_shape));
  }
  ComplexImage u = (1.0 - cfg.alpha) * x;
  if (cfg.alpha != 0.0) axpy(cfg.alpha, net_forward(net, x), u);
  auto r = prox_data(spec, u, b, cfg.alpha, cfg.lambda, solve_options(cfg));
  if (!r.converged) {
    throw SolverError("t_mol_apply: inner solve stalled at relative residual " +
                      std::to_string(r.relative_residual));
  }
  return std::move(r.x);
}

FixedPointResult forward_deq(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                             const ComplexImage& b) {
  cfg.validate();
  return forward_deq_from(net, spec, cfg, b, sense_init(spec, b, cfg.lambda0, solve_options(cfg)));
}

FixedPointResult forward_deq_from(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                                  const ComplexImage& b, ComplexImage x0) {
  cfg.validate();
  FixedPointResult out;
  ComplexImage x = std::move(x0);
  for (int n = 1; n <= cfg.max_iter_forward; ++n) {
    ComplexImage next = t_mol_apply(net, spec, cfg, x, b);
    const double e = relative_change(next, x);
    out.residual_trace.push_back(e);
    out.nfe = n;
    x = std::move(next);
    if (!std::isfinite(e) || !x.all_finite()) break;
    if (e <= cfg.kappa) {
      out.converged = true;
      break;
    }
  }
  out.x_star = std::move(x);
  return out;
}

double stationarity_residual(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                             const ComplexImage& x, const ComplexImage& b) {
  ComplexImage r = cfg.lambda * adjoint(spec, apply(spec, x) - b);
  r += x;
  r -= net_forward(net, x);
  return norm(r);
}

AdjointResult solve_adjoint(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                            const ComplexImage& x_star, const ComplexImage& grad_loss_x) {
  cfg.validate();
  require_same_shape(x_star, grad_loss_x, "solve_adjoint");
  AdjointResult out;
  ForwardCache cache;
  net_forward(net, x_star, &cache);
  ComplexImage q = ComplexImage::zeros_like(grad_loss_x);
  ComplexImage qp = q;
  if (norm(grad_loss_x) == 0.0) {
    out.q = q;
    out.q_prox = qp;
    out.converged = true;
    return out;
  }
  for (int k = 1; k <= cfg.max_iter_backward; ++k) {
    // J_T^T q = (1 - alpha) Q q + alpha J_H^T Q q
    ComplexImage next = (1.0 - cfg.alpha) * qp;
    if (cfg.alpha != 0.0) axpy(cfg.alpha, net_vjp_input(net, cache, qp), next);
    next += grad_loss_x;
    const double e = relative_change(next, q);
    out.residual_trace.push_back(e);
    out.iterations = k;
    q = std::move(next);
    qp = apply_q(spec, cfg, q);
    if (!std::isfinite(e)) break;
    if (e <= cfg.kappa) {
      out.converged = true;
      break;
    }
  }
  out.q = std::move(q);
  out.q_prox = std::move(qp);
  return out;
}

DeqGradient backward_deq(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                         const ComplexImage& b, const ComplexImage& x_star, const ComplexImage& grad_loss_x) {
  DeqGradient out;
  auto adj = solve_adjoint(net, spec, cfg, x_star, grad_loss_x);
  out.iterations = adj.iterations;
  out.converged = adj.converged;
  if (norm(adj.q_prox) == 0.0) {
    out.theta = NetGradient::zeros_like(net);
    return out;
  }
  ForwardCache cache;
  net_forward(net, x_star, &cache);
  out.theta = net_grad_weights(net, cache, adj.q_prox);
  out.theta *= cfg.alpha;
  // dT/dlambda at the fixed point is -alpha Q A^H (A x* - b).
  ComplexImage data_grad = adjoint(spec, apply(spec, x_star) - b);
  out.lambda = -cfg.alpha * real_inner(adj.q_prox, data_grad);
  return out;
}

}  // namespace mol
