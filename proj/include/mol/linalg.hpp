#pragma once

#include <cstdint>
#include <functional>

#include "mol/complex_image.hpp"

namespace mol {

using LinearMap = std::function<ComplexImage(const ComplexImage&)>;

struct PowerIterationResult {
  double eigenvalue = 0.0;  // Rayleigh quotient of the last iterate
  ComplexImage vector;      // unit norm
  int iterations = 0;
};

// Largest eigenvalue of a self-adjoint PSD map on images of `shape`.
// Deterministic given `seed`; a start vector annihilated by `op` is redrawn.
PowerIterationResult power_iteration(const LinearMap& op, const Shape& shape, int iters,
                                     std::uint64_t seed);
// Warm-started variant; `start` must be nonzero.
PowerIterationResult power_iteration(const LinearMap& op, ComplexImage start, int iters,
                                     std::uint64_t seed);

struct CgOptions {
  double tol = 1e-10;
  int max_iter = 200;
};

struct CgResult {
  ComplexImage x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

// Solves op(x) = rhs for Hermitian positive definite `op`. Stops once
// ||op(x) - rhs|| <= tol * ||rhs||. Throws SolverError on non-finite iterates.
CgResult conjugate_gradient(const LinearMap& op, const ComplexImage& rhs, const CgOptions& options = {},
                            const ComplexImage* x0 = nullptr);

}  // namespace mol
