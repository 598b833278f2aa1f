#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mol/complex_image.hpp"

namespace mol {

// One 2D convolution with circular padding. Weights are [out][in][k][k].
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  std::vector<double> weights;
  std::vector<double> bias;

  // Last operator-norm estimate and the power-iteration vector behind it,
  // valid for images of `power_shape`.
  double spectral_norm = 0.0;
  std::vector<double> power_vector;
  Shape power_shape;

  std::size_t parameter_count() const { return weights.size() + bias.size(); }
};

struct NetArchitecture {
  int layers = 5;
  int hidden = 64;
  int kernel = 3;
};

// H_theta: a plain conv stack, ReLU after every layer except the last. A complex
// [H, W] image enters as two real channels (real, imaginary) and leaves the same way.
struct DenoiserNet {
  std::vector<ConvLayer> layers;

  int depth() const { return int(layers.size()); }
  std::size_t parameter_count() const;
};

DenoiserNet make_xavier_net(const NetArchitecture& arch, std::uint64_t seed);
DenoiserNet make_zero_net(const NetArchitecture& arch);
// Single linear layer whose centre tap is `gain` on the matching channel: H(x) = gain * x.
DenoiserNet make_scaled_identity_net(double gain, int kernel = 3);

// Stack built so that H(x) = -gain * x + H_inner(x), with H_inner a Xavier net
// spectrally normalized to `inner_target` on `shape`. F = I - H is then
// (1 + gain - inner_target)-monotone while L[H] exceeds one: undamped
// iteration oscillates, small damping converges. Needs arch.hidden > 4.
DenoiserNet make_overshoot_net(const NetArchitecture& arch, double gain, double inner_target,
                               const Shape& shape, std::uint64_t seed);

std::uint64_t fingerprint(const DenoiserNet& net);

// Activations kept by net_forward for the backward passes.
struct ForwardCache {
  Shape shape;
  std::uint64_t net_fingerprint = 0;
  std::vector<std::vector<double>> inputs;   // input of layer l
  std::vector<std::vector<double>> preacts;  // pre-activation of layer l, l < depth-1
};

struct LayerGradient {
  std::vector<double> weights;
  std::vector<double> bias;
};

struct NetGradient {
  std::vector<LayerGradient> layers;

  static NetGradient zeros_like(const DenoiserNet& net);
  NetGradient& operator+=(const NetGradient& other);
  NetGradient& operator*=(double s);
  void axpy(double s, const NetGradient& other);
  std::vector<double> flatten() const;
  double norm() const;
};

ComplexImage net_forward(const DenoiserNet& net, const ComplexImage& x, ForwardCache* cache = nullptr);

// (dH/dx)^T v at the cached point. Throws StaleCacheError if the weights changed.
ComplexImage net_vjp_input(const DenoiserNet& net, const ForwardCache& cache, const ComplexImage& v);
// d<H(x), v>/dtheta at the cached point.
NetGradient net_grad_weights(const DenoiserNet& net, const ForwardCache& cache, const ComplexImage& v);

struct NetVjp {
  ComplexImage input;
  NetGradient weights;
};
// Both products from a single backward sweep.
NetVjp net_vjp(const DenoiserNet& net, const ForwardCache& cache, const ComplexImage& v);

// F(x) = x - H(x)
ComplexImage score_apply(const DenoiserNet& net, const ComplexImage& x);

// Parameter vector in layer order: weights then bias, per layer.
std::vector<double> flatten_parameters(const DenoiserNet& net);
void assign_parameters(DenoiserNet& net, std::span<const double> params);

struct SpectralOptions {
  int iters = 20;         // warm-started iterations
  int cold_iters = 200;   // when no vector for this image shape is cached
  std::uint64_t seed = 11;
};

// Operator norm of the layer's linear part on [H, W] images, by power
// iteration on W^T W. Updates the layer's cache.
double layer_spectral_norm(ConvLayer& layer, const Shape& shape, const SpectralOptions& options = {});

// Rescales each layer by min(1, target^(1/s) / sigma) so the product of layer
// norms is at most `target`. Biases are left alone.
void spectral_normalize(DenoiserNet& net, double target, const Shape& shape, const SpectralOptions& options = {});

}  // namespace mol
