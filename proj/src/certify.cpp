#include "mol/certify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mol/errors.hpp"
#include "mol/random.hpp"
#include "mol/robustness.hpp"

namespace mol {

namespace {

CertificateItem item(std::string name, double measured, double threshold, std::string detail = {}) {
  CertificateItem it;
  it.name = std::move(name);
  it.measured = measured;
  it.threshold = threshold;
  it.margin = threshold - measured;
  it.passed = std::isfinite(measured) && measured <= threshold;
  it.detail = std::move(detail);
  return it;
}

}  // namespace

double max_contraction_ratio(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                             const ComplexImage& b, int pairs, std::uint64_t seed) {
  if (pairs < 1) throw std::invalid_argument("max_contraction_ratio: pairs must be >= 1");
  Rng rng(seed);
  const double scale = std::max(norm(b), 1e-12) / std::sqrt(double(shape_volume(spec.image_shape)));
  double worst = 0.0;
  for (int p = 0; p < pairs; ++p) {
    ComplexImage x = scale * random_complex(spec.image_shape, rng);
    ComplexImage y = scale * random_complex(spec.image_shape, rng);
    const double num = norm(t_mol_apply(net, spec, cfg, x, b) - t_mol_apply(net, spec, cfg, y, b));
    worst = std::max(worst, num / norm(x - y));
  }
  return worst;
}

UniquenessResult fixed_point_spread(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                                    const ComplexImage& b, int starts, std::uint64_t seed) {
  if (starts < 2) throw std::invalid_argument("fixed_point_spread: need at least 2 starts");
  Rng rng(seed);
  const double scale = std::max(norm(b), 1e-12) / std::sqrt(double(shape_volume(spec.image_shape)));
  UniquenessResult out;
  for (int s = 0; s < starts; ++s) {
    auto fwd = forward_deq_from(net, spec, cfg, b, scale * random_complex(spec.image_shape, rng));
    out.all_converged = out.all_converged && fwd.converged;
    out.solutions.push_back(std::move(fwd.x_star));
  }
  for (std::size_t i = 0; i < out.solutions.size(); ++i) {
    for (std::size_t j = 0; j < out.solutions.size(); ++j) {
      if (i == j) continue;
      const double d = norm(out.solutions[i] - out.solutions[j]) / (norm(out.solutions[j]) + kResidualEps);
      out.max_relative_spread = std::max(out.max_relative_spread, d);
    }
  }
  return out;
}

double log_residual_slope(const std::vector<double>& trace, int window) {
  if (window < 2 || trace.size() < std::size_t(window)) {
    throw std::invalid_argument("log_residual_slope: trace shorter than the window");
  }
  const std::size_t start = trace.size() - std::size_t(window);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < window; ++i) {
    const double y = std::log(std::max(trace[start + std::size_t(i)], 1e-300));
    sx += i;
    sy += y;
    sxx += double(i) * i;
    sxy += i * y;
  }
  const double n = window;
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

bool CertificationReport::all_passed() const {
  return std::all_of(items.begin(), items.end(), [](const CertificateItem& i) { return i.passed; });
}

CertificationReport certify(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                            const ComplexImage& b, const CertifyOptions& options) {
  cfg.validate();
  CertificationReport rep;
  rep.alpha = cfg.alpha;
  rep.alpha_max = alpha_max(cfg.m);
  rep.m = cfg.m;
  rep.lambda = cfg.lambda;
  rep.mu_min = spec.mu_min;
  rep.approximate = options.approximate;
  bool feasible = true;
  try {
    rep.lipschitz_T = lipschitz_T(cfg.m, cfg.alpha, cfg.lambda, spec.mu_min);
  } catch (const InfeasibleError&) {
    rep.lipschitz_T = std::numeric_limits<double>::quiet_NaN();
    feasible = false;
  }
  const bool contractive = feasible && rep.lipschitz_T < 1.0;

  rep.items.push_back(item("step_size", cfg.alpha, rep.alpha_max, "alpha below alpha_max(m)"));
  rep.items.back().passed = cfg.alpha < rep.alpha_max;

  const double ratio = max_contraction_ratio(net, spec, cfg, b, options.pairs, derive_seed(options.seed, 1));
  auto c = item("contraction", ratio, contractive ? rep.lipschitz_T + 1e-6 : 1.0,
                "max ||T(x)-T(y)||/||x-y|| vs L[T] + 1e-6");
  if (!contractive) {
    c.passed = false;
    c.detail = "no contraction factor below one for this alpha and m";
  }
  rep.items.push_back(c);

  MolConfig tight = cfg;
  tight.kappa = options.kappa;
  tight.max_iter_forward = options.max_iter;
  const auto uniq = fixed_point_spread(net, spec, tight, b, options.starts, derive_seed(options.seed, 2));
  auto u = item("uniqueness", uniq.max_relative_spread, 100.0 * options.kappa,
                "pairwise relative spread of fixed points from random starts");
  u.passed = u.passed && uniq.all_converged;
  if (!uniq.all_converged) u.detail += "; some starts did not converge";
  rep.items.push_back(u);

  const auto fwd = forward_deq(net, spec, tight, b);
  if (fwd.residual_trace.size() >= std::size_t(options.slope_window)) {
    const double slope = log_residual_slope(fwd.residual_trace, options.slope_window);
    auto g = item("geometric_convergence", slope, contractive ? std::log(rep.lipschitz_T) + 1e-3 : 0.0,
                  "slope of log e_n over the last iterations vs log L[T] + 1e-3");
    g.passed = g.passed && contractive && fwd.converged;
    rep.items.push_back(g);
  } else {
    rep.items.push_back(item("geometric_convergence", 0.0, 0.0, "trace shorter than the slope window"));
    rep.items.back().passed = fwd.converged && contractive;
  }

  if (!contractive) {
    auto r = item("robustness", std::numeric_limits<double>::infinity(), 0.0, "no finite bound for this alpha");
    rep.items.push_back(r);
    return rep;
  }
  const double bound = robustness_bound(cfg.alpha, cfg.lambda, cfg.m, spec.mu_min);
  double worst = 0.0;
  AttackOptions ao;
  ao.steps = options.attack_steps;
  for (std::size_t e = 0; e < options.epsilons.size(); ++e) {
    ao.seed = derive_seed(options.seed, 100 + e);
    worst = std::max(worst, adversarial_perturb(net, spec, cfg, b, options.epsilons[e], ao).amplification);
    if (options.gaussian_trials > 0) {
      for (const auto& r : gaussian_perturb(net, spec, cfg, b, options.epsilons[e], options.gaussian_trials,
                                            derive_seed(options.seed, 200 + e))) {
        worst = std::max(worst, r.amplification);
      }
    }
  }
  rep.items.push_back(item("robustness", worst, bound, "max amplification over adversarial and Gaussian trials"));
  return rep;
}

}  // namespace mol
