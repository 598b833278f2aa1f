#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mol/complex_image.hpp"
#include "mol/denoiser.hpp"

namespace mol {

struct AscentOptions {
  int steps = 10;
  double step_fraction = 0.1;   // step = step_fraction * ||anchor||
  double init_fraction = 1e-2;  // ||eta_0|| = init_fraction * ||anchor||
  std::uint64_t seed = 0;
};

// Best p(anchor, eta) = ||H(anchor + eta) - H(anchor)||^2 / ||eta||^2 found by ascent.
struct LipEstimate {
  double value = 0.0;  // squared ratio
  ComplexImage eta_star;
  ComplexImage anchor;
  int ascent_steps = 0;
  std::vector<double> history;  // best-so-far after the start and after each step

  double scale() const { return std::sqrt(value); }
};

LipEstimate estimate_local_lipschitz(const DenoiserNet& net, const ComplexImage& anchor,
                                     const AscentOptions& options = {});

// p(anchor, eta)
double lipschitz_ratio(const DenoiserNet& net, const ComplexImage& anchor, const ComplexImage& eta);

struct RatioGradient {
  double value = 0.0;
  NetGradient theta;
};
// p(anchor, eta) and its gradient in the weights with anchor and eta held fixed.
RatioGradient lipschitz_ratio_grad(const DenoiserNet& net, const ComplexImage& anchor, const ComplexImage& eta);

// Product of per-layer operator norms on [H, W] images; refreshes the layers' power caches.
double spectral_bound(DenoiserNet& net, const Shape& shape, const SpectralOptions& options = {});
// Same, on a copy, with cold-started power iterations.
double spectral_bound(const DenoiserNet& net, const Shape& shape, const SpectralOptions& options = {});

inline constexpr double kBarrierMargin = 1e-3;
inline constexpr double kBarrierCapGap = 1e-12;

// -beta log(threshold - p) while the gap exceeds kBarrierCapGap. Past that: the
// value at the cap plus a line of slope beta / kBarrierMargin.
double barrier_penalty(double p, double threshold, double beta);
double barrier_derivative(double p, double threshold, double beta);

}  // namespace mol
