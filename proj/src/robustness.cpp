#include "mol/robustness.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mol/errors.hpp"
#include "mol/metrics.hpp"
#include "mol/random.hpp"

namespace mol {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Baseline {
  ComplexImage x;
  double bound = kInf;
  double psnr_clean = kPsnrCap;
};

Baseline baseline(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg, const ComplexImage& b,
                  const ComplexImage* reference) {
  auto fwd = forward_deq(net, spec, cfg, b);
  if (!fwd.converged) throw SolverError("perturbation analysis: forward solve at the clean input did not converge");
  Baseline out;
  out.x = std::move(fwd.x_star);
  try {
    out.bound = robustness_bound(cfg.alpha, cfg.lambda, cfg.m, spec.mu_min);
  } catch (const InfeasibleError&) {
    out.bound = kInf;
  }
  if (reference) out.psnr_clean = psnr(out.x, *reference);
  return out;
}

// Scales gamma, already restricted to the measurement support, to norm `radius`.
void renormalize(ComplexImage& gamma, double radius) {
  const double n = norm(gamma);
  if (n > 0.0) gamma *= radius / n;
}

void fill_outcome(PerturbationReport& r, const FixedPointResult& fwd, const Baseline& base,
                  const ComplexImage* reference) {
  r.delta_in_norm = norm(r.gamma);
  if (!fwd.converged) {
    r.stable = false;
    r.delta_out_norm = kInf;
    r.amplification = kInf;
    r.psnr_perturbed = -kPsnrCap;
    return;
  }
  r.delta_out_norm = norm(fwd.x_star - base.x);
  r.amplification = r.delta_in_norm > 0.0 ? r.delta_out_norm / r.delta_in_norm : 0.0;
  r.psnr_perturbed = psnr(fwd.x_star, reference ? *reference : base.x);
}

}  // namespace

double robustness_bound(double alpha, double lambda, double m, double mu_min) {
  const double r = lipschitz_R(m, alpha);
  if (r >= 1.0) throw InfeasibleError("robustness_bound: L[R] >= 1, step size outside the certified range");
  const double r2 = 1.0 - 2.0 * alpha * m + alpha * alpha * (2.0 - m) * (2.0 - m);
  const double gap = (1.0 - r2) / (1.0 + r);
  return alpha * lambda / (1.0 + lambda * mu_min) / gap;
}

PerturbationReport adversarial_perturb(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                                       const ComplexImage& b, double epsilon, const AttackOptions& options,
                                       const ComplexImage* reference) {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("adversarial_perturb: epsilon must be >= 0");
  if (options.steps < 0) throw std::invalid_argument("adversarial_perturb: steps must be >= 0");
  const Baseline base = baseline(net, spec, cfg, b, reference);
  PerturbationReport best;
  best.epsilon = epsilon;
  best.theory_bound = base.bound;
  best.psnr_clean = base.psnr_clean;
  best.gamma = ComplexImage::zeros_like(b);
  const double radius = epsilon * norm(b);
  if (radius == 0.0) {
    best.psnr_perturbed = best.psnr_clean;
    best.objective_history.assign(std::size_t(options.steps) + 1, 0.0);
    return best;
  }

  Rng rng(options.seed);
  ComplexImage gamma = project_measurement(spec, random_complex(b.shape(), rng));
  renormalize(gamma, radius);
  double best_u = -1.0;
  ComplexImage warm = base.x;
  for (int step = 0; step <= options.steps; ++step) {
    auto fwd = forward_deq_from(net, spec, cfg, b + gamma, warm);
    PerturbationReport cur;
    cur.epsilon = epsilon;
    cur.theory_bound = base.bound;
    cur.psnr_clean = base.psnr_clean;
    cur.gamma = gamma;
    fill_outcome(cur, fwd, base, reference);
    if (!cur.stable) {
      cur.objective_history = best.objective_history;
      cur.objective_history.push_back(kInf);
      return cur;
    }
    const double u = cur.delta_out_norm * cur.delta_out_norm;
    if (u > best_u) {
      best_u = u;
      cur.objective_history = std::move(best.objective_history);
      best = std::move(cur);
    }
    best.objective_history.push_back(best_u);
    if (step == options.steps) break;

    // grad_gamma U = alpha lambda A Q q with (I - J_T^T) q = 2 (x*(b + gamma) - x*(b)).
    auto adj = solve_adjoint(net, spec, cfg, fwd.x_star, 2.0 * (fwd.x_star - base.x));
    ComplexImage g = project_measurement(spec, (cfg.alpha * cfg.lambda) * apply(spec, adj.q_prox));
    const double gn = norm(g);
    if (!(gn > 0.0) || !std::isfinite(gn)) break;
    axpy(options.step_fraction * radius / gn, g, gamma);
    gamma = project_measurement(spec, gamma);
    renormalize(gamma, radius);
    warm = std::move(fwd.x_star);
  }
  return best;
}

std::vector<PerturbationReport> gaussian_perturb(const DenoiserNet& net, const OperatorSpec& spec,
                                                 const MolConfig& cfg, const ComplexImage& b, double epsilon,
                                                 int trials, std::uint64_t seed, const ComplexImage* reference) {
  if (trials < 1) throw std::invalid_argument("gaussian_perturb: trials must be >= 1");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("gaussian_perturb: epsilon must be >= 0");
  const Baseline base = baseline(net, spec, cfg, b, reference);
  const double radius = epsilon * norm(b);
  Rng rng(seed);
  std::vector<PerturbationReport> out;
  for (int t = 0; t < trials; ++t) {
    PerturbationReport r;
    r.epsilon = epsilon;
    r.theory_bound = base.bound;
    r.psnr_clean = base.psnr_clean;
    r.gamma = project_measurement(spec, random_complex(b.shape(), rng));
    renormalize(r.gamma, radius);
    if (radius == 0.0) {
      r.gamma = ComplexImage::zeros_like(b);
      r.psnr_perturbed = r.psnr_clean;
      out.push_back(std::move(r));
      continue;
    }
    auto fwd = forward_deq_from(net, spec, cfg, b + r.gamma, base.x);
    fill_outcome(r, fwd, base, reference);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace mol
