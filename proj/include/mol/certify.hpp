#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mol/complex_image.hpp"
#include "mol/denoiser.hpp"
#include "mol/forward_model.hpp"
#include "mol/mol_solver.hpp"

namespace mol {

// Largest ||T(x) - T(y)|| / ||x - y|| over `pairs` random pairs scaled like b.
double max_contraction_ratio(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                             const ComplexImage& b, int pairs, std::uint64_t seed);

struct UniquenessResult {
  double max_relative_spread = 0.0;  // max over pairs of ||x_i - x_j|| / ||x_j||
  bool all_converged = true;
  std::vector<ComplexImage> solutions;
};

// forward_deq from `starts` random initial points instead of the SENSE start.
UniquenessResult fixed_point_spread(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                                    const ComplexImage& b, int starts, std::uint64_t seed);

// Least-squares slope of log(trace) over its last `window` entries.
double log_residual_slope(const std::vector<double>& trace, int window = 20);

struct CertificateItem {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double threshold = 0.0;
  double margin = 0.0;  // threshold - measured; positive when passing
  std::string detail;
};

struct CertificationReport {
  double alpha = 0.0;
  double alpha_max = 0.0;
  double m = 0.0;
  double lambda = 0.0;
  double mu_min = 0.0;
  double lipschitz_T = 0.0;  // NaN when the radicand is negative
  bool approximate = false;  // m taken from a barrier-trained net, not enforced by construction
  std::vector<CertificateItem> items;

  bool all_passed() const;
};

struct CertifyOptions {
  int pairs = 100;
  int starts = 10;
  double kappa = 1e-8;
  int max_iter = 5000;
  int slope_window = 20;
  std::vector<double> epsilons{0.05, 0.10, 0.15};
  int gaussian_trials = 50;
  int attack_steps = 50;
  std::uint64_t seed = 0;
  bool approximate = false;
};

CertificationReport certify(const DenoiserNet& net, const OperatorSpec& spec, const MolConfig& cfg,
                            const ComplexImage& b, const CertifyOptions& options = {});

}  // namespace mol
