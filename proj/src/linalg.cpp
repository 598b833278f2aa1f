#include "mol/linalg.hpp"

#include <cmath>
#include <string>

#include "mol/errors.hpp"
#include "mol/random.hpp"

namespace mol {

PowerIterationResult power_iteration(const LinearMap& op, const Shape& shape, int iters,
                                     std::uint64_t seed) {
  Rng rng(seed);
  return power_iteration(op, random_unit(shape, rng), iters, derive_seed(seed, 1));
}

PowerIterationResult power_iteration(const LinearMap& op, ComplexImage start, int iters,
                                     std::uint64_t seed) {
  if (iters < 1) throw std::invalid_argument("power_iteration: iters must be >= 1");
  Rng rng(seed);
  ComplexImage v = std::move(start);
  double n = norm(v);
  if (n == 0.0) throw std::invalid_argument("power_iteration: zero start vector");
  v *= 1.0 / n;

  PowerIterationResult result;
  ComplexImage w = op(v);
  for (int redraw = 0; norm(w) == 0.0; ++redraw) {
    // Start vector lies in the null space; try a fresh direction.
    if (redraw == 8) {
      result.vector = v;
      return result;  // op annihilates everything we tried: eigenvalue 0
    }
    v = random_unit(v.shape(), rng);
    w = op(v);
  }
  for (int it = 0; it < iters; ++it) {
    result.eigenvalue = real_inner(v, w);
    result.iterations = it + 1;
    const double wn = norm(w);
    if (!std::isfinite(wn)) throw SolverError("power_iteration: non-finite iterate");
    if (wn == 0.0) break;
    v = std::move(w);
    v *= 1.0 / wn;
    w = op(v);
  }
  result.eigenvalue = real_inner(v, w);
  result.vector = std::move(v);
  return result;
}

CgResult conjugate_gradient(const LinearMap& op, const ComplexImage& rhs, const CgOptions& options,
                            const ComplexImage* x0) {
  CgResult result;
  const double rhs_norm = norm(rhs);
  if (!std::isfinite(rhs_norm)) throw SolverError("conjugate_gradient: non-finite right-hand side");
  result.x = x0 ? *x0 : ComplexImage::zeros_like(rhs);
  require_same_shape(result.x, rhs, "conjugate_gradient");
  if (rhs_norm == 0.0 && !x0) {
    result.converged = true;
    return result;
  }
  const double scale = rhs_norm > 0.0 ? rhs_norm : 1.0;

  ComplexImage r = rhs;
  if (x0) r -= op(result.x);
  ComplexImage p = r;
  double rr = norm_squared(r);
  result.relative_residual = std::sqrt(rr) / scale;
  if (result.relative_residual <= options.tol) {
    result.converged = true;
    return result;
  }
  for (int it = 0; it < options.max_iter; ++it) {
    const ComplexImage ap = op(p);
    const double pap = real_inner(p, ap);
    if (!std::isfinite(pap) || pap <= 0.0) {
      throw SolverError("conjugate_gradient: operator not positive definite or non-finite (p'Ap = " +
                        std::to_string(pap) + ") at iteration " + std::to_string(it));
    }
    const double step = rr / pap;
    axpy(step, p, result.x);
    axpy(-step, ap, r);
    const double rr_next = norm_squared(r);
    result.iterations = it + 1;
    result.relative_residual = std::sqrt(rr_next) / scale;
    if (!std::isfinite(rr_next)) throw SolverError("conjugate_gradient: non-finite residual");
    if (result.relative_residual <= options.tol) {
      result.converged = true;
      return result;
    }
    const double beta = rr_next / rr;
    rr = rr_next;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
  }
  return result;
}

}  // namespace mol
