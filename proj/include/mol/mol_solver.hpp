#pragma once

#include <vector>

#include "mol/complex_image.hpp"
#include "mol/denoiser.hpp"
#include "mol/forward_model.hpp"

namespace mol {

struct MolConfig {
  double alpha = 0.055;
  double lambda = 1.0;
  double m = 0.1;
  double kappa = 1e-4;
  int max_iter_forward = 200;
  int max_iter_backward = 200;
  double lambda0 = 100.0;
  CgOptions cg;

  // Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

// Guard added to every relative-residual denominator.
inline constexpr double kResidualEps = 1e-12;

struct FixedPointResult {
  ComplexImage x_star;
  int nfe = 0;
  std::vector<double> residual_trace;
  bool converged = false;
};

// Largest step with a guaranteed contraction for an m-monotone F = I - H.
double alpha_max(double m);
// Factor sqrt(1 - 2 alpha m + alpha^2 (2 - m)^2) of the damped residual step.
double lipschitz_R(double m, double alpha);
// lipschitz_R / (1 + lambda mu_min). Throws InfeasibleError on a negative radicand.
double lipschitz_T(double m, double alpha, double lambda, double mu_min);

// One step x -> Q((1 - alpha) x + alpha H(x)) + z with Q = (I + alpha lambda A^H A)^{-1},
// z = alpha lambda Q A^H b.
ComplexImage t_mol_apply(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                         const ComplexImage& x, const ComplexImage& b);

FixedPointResult forward_deq(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                             const ComplexImage& b);
// Same iteration from a caller-chosen start instead of the SENSE initialization.
FixedPointResult forward_deq_from(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                                  const ComplexImage& b, ComplexImage x0);

// ||lambda A^H (A x - b) + x - H(x)||
double stationarity_residual(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                             const ComplexImage& x, const ComplexImage& b);

struct AdjointResult {
  ComplexImage q;         // fixed point of q = J_T^T q + g
  ComplexImage q_prox;    // Q q
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_trace;
};

// Solves (I - J_T^T) q = g at x_star by the damped recursion from q = 0.
AdjointResult solve_adjoint(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                            const ComplexImage& x_star, const ComplexImage& grad_loss_x);

struct DeqGradient {
  NetGradient theta;
  double lambda = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Implicit gradient of a loss C(x*) given dC/dx* (real and imaginary parts as one
// complex image). b enters the lambda derivative.
DeqGradient backward_deq(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                         const ComplexImage& b, const ComplexImage& x_star, const ComplexImage& grad_loss_x);

}  // namespace mol
