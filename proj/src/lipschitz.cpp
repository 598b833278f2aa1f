#include "mol/lipschitz.hpp"

#include <stdexcept>

#include "mol/errors.hpp"
#include "mol/random.hpp"

namespace mol {

namespace {

double ratio_of(const ComplexImage& d, const ComplexImage& eta) {
  const double en = norm_squared(eta);
  if (en == 0.0) throw std::invalid_argument("lipschitz ratio: eta is zero");
  return norm_squared(d) / en;
}

}  // namespace

double lipschitz_ratio(const DenoiserNet& net, const ComplexImage& anchor, const ComplexImage& eta) {
  require_same_shape(anchor, eta, "lipschitz_ratio");
  return ratio_of(net_forward(net, anchor + eta) - net_forward(net, anchor), eta);
}

LipEstimate estimate_local_lipschitz(const DenoiserNet& net, const ComplexImage& anchor,
                                     const AscentOptions& options) {
  if (options.steps < 1) throw std::invalid_argument("estimate_local_lipschitz: steps must be >= 1");
  Rng rng(options.seed);
  const double scale = norm(anchor) > 0.0 ? norm(anchor) : 1.0;
  const double step = options.step_fraction * scale;

  LipEstimate out;
  out.anchor = anchor;
  const ComplexImage h0 = net_forward(net, anchor);
  ComplexImage eta = options.init_fraction * scale * random_unit(anchor.shape(), rng);

  ForwardCache cache;
  ComplexImage d = net_forward(net, anchor + eta, &cache) - h0;
  double p = ratio_of(d, eta);
  out.value = p;
  out.eta_star = eta;
  out.history.push_back(p);

  for (int s = 0; s < options.steps; ++s) {
    const double en2 = norm_squared(eta);
    // grad p = 2 J^T d / |eta|^2 - 2 |d|^2 eta / |eta|^4
    ComplexImage g = (2.0 / en2) * net_vjp_input(net, cache, d);
    axpy(-2.0 * norm_squared(d) / (en2 * en2), eta, g);
    const double gn = norm(g);
    out.ascent_steps = s + 1;
    if (!(gn > 1e-14 * (p + 1.0) / std::sqrt(en2))) {
      // Stationary: the ratio does not depend on eta locally.
      out.history.push_back(out.value);
      continue;
    }
    axpy(step / gn, g, eta);
    if (norm(eta) == 0.0) eta = options.init_fraction * scale * random_unit(anchor.shape(), rng);
    d = net_forward(net, anchor + eta, &cache) - h0;
    p = ratio_of(d, eta);
    if (p > out.value) {
      out.value = p;
      out.eta_star = eta;
    }
    out.history.push_back(out.value);
  }
  return out;
}

RatioGradient lipschitz_ratio_grad(const DenoiserNet& net, const ComplexImage& anchor, const ComplexImage& eta) {
  require_same_shape(anchor, eta, "lipschitz_ratio_grad");
  ForwardCache c_shift, c_anchor;
  const ComplexImage d = net_forward(net, anchor + eta, &c_shift) - net_forward(net, anchor, &c_anchor);
  RatioGradient out;
  out.value = ratio_of(d, eta);
  const double w = 2.0 / norm_squared(eta);
  out.theta = net_grad_weights(net, c_shift, d);
  out.theta.axpy(-1.0, net_grad_weights(net, c_anchor, d));
  out.theta *= w;
  return out;
}

double spectral_bound(DenoiserNet& net, const Shape& shape, const SpectralOptions& options) {
  double prod = 1.0;
  for (auto& layer : net.layers) prod *= layer_spectral_norm(layer, shape, options);
  return prod;
}

double spectral_bound(const DenoiserNet& net, const Shape& shape, const SpectralOptions& options) {
  DenoiserNet copy = net;
  for (auto& layer : copy.layers) layer.power_vector.clear();
  return spectral_bound(copy, shape, options);
}

double barrier_penalty(double p, double threshold, double beta) {
  if (threshold - p > kBarrierCapGap) return -beta * std::log(threshold - p);
  return -beta * std::log(kBarrierCapGap) + beta / kBarrierMargin * (p - (threshold - kBarrierCapGap));
}

double barrier_derivative(double p, double threshold, double beta) {
  if (threshold - p > kBarrierCapGap) return beta / (threshold - p);
  return beta / kBarrierMargin;
}

}  // namespace mol
