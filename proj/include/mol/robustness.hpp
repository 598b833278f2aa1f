#pragma once

#include <cstdint>
#include <vector>

#include "mol/complex_image.hpp"
#include "mol/denoiser.hpp"
#include "mol/forward_model.hpp"
#include "mol/mol_solver.hpp"

namespace mol {

struct PerturbationReport {
  double epsilon = 0.0;  // budget as a fraction of ||b||
  double delta_in_norm = 0.0;
  double delta_out_norm = 0.0;
  double amplification = 0.0;  // out / in; +inf when the perturbed solve diverged
  double theory_bound = 0.0;   // +inf when the configuration has no certified bound
  double psnr_clean = 0.0;
  double psnr_perturbed = 0.0;
  bool stable = true;
  ComplexImage gamma;
  std::vector<double> objective_history;  // best-so-far ||x*(b+gamma) - x*(b)||^2, adversarial only
};

// alpha lambda / (1 + lambda mu_min) / (1 - L[R]). Throws InfeasibleError when L[R] >= 1.
double robustness_bound(double alpha, double lambda, double m, double mu_min);

struct AttackOptions {
  int steps = 50;
  double step_fraction = 0.1;  // of epsilon ||b||
  std::uint64_t seed = 0;
};

// Projected gradient ascent on ||x*(b + gamma) - x*(b)||^2 over ||gamma|| = epsilon ||b||.
// `reference` (optional) is the ground truth for the PSNR columns; x*(b) otherwise.
PerturbationReport adversarial_perturb(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                                       const ComplexImage& b, double epsilon, const AttackOptions& options = {},
                                       const ComplexImage* reference = nullptr);

std::vector<PerturbationReport> gaussian_perturb(const DenoiserNet& net, const OperatorSpec& spec,
                                                 const MolConfig& cfg, const ComplexImage& b, double epsilon,
                                                 int trials, std::uint64_t seed,
                                                 const ComplexImage* reference = nullptr);

}  // namespace mol
