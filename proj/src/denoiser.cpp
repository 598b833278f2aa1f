#include "mol/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>

#include "mol/errors.hpp"
#include "mol/kernels.hpp"
#include "mol/random.hpp"

namespace mol {

namespace {

kernels::ConvGeometry geometry(const ConvLayer& layer, const Shape& shape) {
  return {layer.in_channels, layer.out_channels, int(shape[0]), int(shape[1]), layer.kernel};
}

ConvLayer make_layer(int in, int out, int kernel) {
  ConvLayer l;
  l.in_channels = in;
  l.out_channels = out;
  l.kernel = kernel;
  l.weights.assign(std::size_t(out) * in * kernel * kernel, 0.0);
  l.bias.assign(std::size_t(out), 0.0);
  return l;
}

std::vector<int> channel_plan(const NetArchitecture& arch) {
  if (arch.layers < 1 || arch.hidden < 1 || arch.kernel < 1 || arch.kernel % 2 == 0) {
    throw std::invalid_argument("NetArchitecture: need layers >= 1, hidden >= 1 and an odd kernel");
  }
  std::vector<int> ch(std::size_t(arch.layers) + 1, arch.hidden);
  ch.front() = 2;
  ch.back() = 2;
  return ch;
}

std::vector<double> to_channels(const ComplexImage& x) {
  const std::size_t n = x.size();
  std::vector<double> out(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = x[i].real();
    out[n + i] = x[i].imag();
  }
  return out;
}

ComplexImage from_channels(const std::vector<double>& v, const Shape& shape) {
  const std::size_t n = v.size() / 2;
  ComplexImage out(shape);
  for (std::size_t i = 0; i < n; ++i) out[i] = {v[i], v[n + i]};
  return out;
}

void check_input(const DenoiserNet& net, const ComplexImage& x) {
  if (net.layers.empty()) throw std::invalid_argument("DenoiserNet: no layers");
  if (x.rank() != 2) throw ShapeError("DenoiserNet: expects a 2D complex image, got " + shape_string(x.shape()));
  if (net.layers.front().in_channels != 2 || net.layers.back().out_channels != 2) {
    throw ShapeError("DenoiserNet: first layer must read 2 channels and last layer must write 2");
  }
}

void check_cache(const DenoiserNet& net, const ForwardCache& cache, const ComplexImage& v) {
  if (cache.inputs.size() != net.layers.size()) throw StaleCacheError("ForwardCache: not filled by net_forward");
  if (cache.net_fingerprint != fingerprint(net)) {
    throw StaleCacheError("ForwardCache: weights changed since the forward pass");
  }
  if (v.shape() != cache.shape) {
    throw ShapeError("net vjp: cotangent shape " + shape_string(v.shape()) + " vs cached " +
                     shape_string(cache.shape));
  }
}

NetVjp backward(const DenoiserNet& net, const ForwardCache& cache, const ComplexImage& v, bool want_weights) {
  check_cache(net, cache, v);
  NetVjp out;
  if (want_weights) out.weights = NetGradient::zeros_like(net);
  std::vector<double> g = to_channels(v);
  const int last = net.depth() - 1;
  for (int l = last; l >= 0; --l) {
    const ConvLayer& layer = net.layers[std::size_t(l)];
    if (l < last) {
      const auto& pre = cache.preacts[std::size_t(l)];
      for (std::size_t j = 0; j < g.size(); ++j) {
        if (!(pre[j] > 0.0)) g[j] = 0.0;
      }
    }
    const auto geo = geometry(layer, cache.shape);
    if (want_weights) {
      auto& lg = out.weights.layers[std::size_t(l)];
      kernels::conv2d_backward_weights(geo, cache.inputs[std::size_t(l)], g, lg.weights, lg.bias);
    }
    std::vector<double> gin(geo.input_size());
    kernels::conv2d_backward_input(geo, layer.weights, g, gin);
    g = std::move(gin);
  }
  out.input = from_channels(g, cache.shape);
  return out;
}

// Operator-norm power iteration for one layer; returns sigma.
double power_sigma(ConvLayer& layer, const Shape& shape, int iters, std::uint64_t seed) {
  const auto geo = geometry(layer, shape);
  std::vector<double> v = layer.power_vector;
  if (v.size() != geo.input_size() || layer.power_shape != shape) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    v.resize(geo.input_size());
    for (double& e : v) e = normal(rng);
  }
  auto normalize = [](std::vector<double>& a) {
    double s = 0.0;
    for (double e : a) s += e * e;
    s = std::sqrt(s);
    if (s > 0.0) {
      for (double& e : a) e /= s;
    }
    return s;
  };
  if (normalize(v) == 0.0) v[0] = 1.0;
  std::vector<double> wv(geo.output_size());
  std::vector<double> wtwv(geo.input_size());
  double sigma2 = 0.0;
  for (int it = 0; it < iters; ++it) {
    kernels::conv2d_forward(geo, layer.weights, {}, v, wv);
    kernels::conv2d_backward_input(geo, layer.weights, wv, wtwv);
    double rq = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) rq += v[j] * wtwv[j];
    sigma2 = rq;
    v.swap(wtwv);
    if (normalize(v) == 0.0) break;
  }
  // Rayleigh quotient of the final vector.
  kernels::conv2d_forward(geo, layer.weights, {}, v, wv);
  double wn = 0.0;
  for (double e : wv) wn += e * e;
  sigma2 = std::max(sigma2, wn);
  layer.power_vector = std::move(v);
  layer.power_shape = shape;
  layer.spectral_norm = std::sqrt(std::max(sigma2, 0.0));
  return layer.spectral_norm;
}

constexpr int kNormalizeRounds = 25;

}  // namespace

std::size_t DenoiserNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

DenoiserNet make_xavier_net(const NetArchitecture& arch, std::uint64_t seed) {
  const auto ch = channel_plan(arch);
  Rng rng(seed);
  DenoiserNet net;
  for (int l = 0; l < arch.layers; ++l) {
    ConvLayer layer = make_layer(ch[std::size_t(l)], ch[std::size_t(l) + 1], arch.kernel);
    const double fan_in = double(layer.in_channels) * arch.kernel * arch.kernel;
    const double fan_out = double(layer.out_channels) * arch.kernel * arch.kernel;
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> unif(-limit, limit);
    for (double& w : layer.weights) w = unif(rng);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

DenoiserNet make_zero_net(const NetArchitecture& arch) {
  const auto ch = channel_plan(arch);
  DenoiserNet net;
  for (int l = 0; l < arch.layers; ++l) net.layers.push_back(make_layer(ch[std::size_t(l)], ch[std::size_t(l) + 1], arch.kernel));
  return net;
}

DenoiserNet make_scaled_identity_net(double gain, int kernel) {
  DenoiserNet net;
  ConvLayer layer = make_layer(2, 2, kernel);
  const int c = kernel / 2;
  for (int o = 0; o < 2; ++o) layer.weights[((std::size_t(o) * 2 + o) * kernel + c) * kernel + c] = gain;
  net.layers.push_back(std::move(layer));
  return net;
}

DenoiserNet make_overshoot_net(const NetArchitecture& arch, double gain, double inner_target, const Shape& shape,
                               std::uint64_t seed) {
  if (arch.layers < 2 || arch.hidden <= 4) {
    throw std::invalid_argument("make_overshoot_net: needs >= 2 layers and hidden > 4");
  }
  NetArchitecture inner_arch = arch;
  inner_arch.hidden = arch.hidden - 4;
  DenoiserNet inner = make_xavier_net(inner_arch, seed);
  spectral_normalize(inner, inner_target, shape);

  DenoiserNet net = make_zero_net(arch);
  const int k = arch.kernel;
  const int c = k / 2;
  auto tap = [k, c](ConvLayer& l, int o, int i) -> double& {
    return l.weights[((std::size_t(o) * l.in_channels + i) * k + c) * k + c];
  };
  const int last = arch.layers - 1;
  for (int l = 0; l < arch.layers; ++l) {
    ConvLayer& dst = net.layers[std::size_t(l)];
    const ConvLayer& src = inner.layers[std::size_t(l)];
    // Channels 0..3 carry relu(re), relu(-re), relu(im), relu(-im) through the stack.
    const int in_off = l == 0 ? 0 : 4;
    const int out_off = l == last ? 0 : 4;
    for (int o = 0; o < src.out_channels; ++o) {
      for (int i = 0; i < src.in_channels; ++i) {
        for (int t = 0; t < k * k; ++t) {
          dst.weights[(std::size_t(o + out_off) * dst.in_channels + (i + in_off)) * k * k + t] =
              src.weights[(std::size_t(o) * src.in_channels + i) * k * k + t];
        }
      }
      dst.bias[std::size_t(o + out_off)] = src.bias[std::size_t(o)];
    }
    if (l == 0) {
      tap(dst, 0, 0) = 1.0;
      tap(dst, 1, 0) = -1.0;
      tap(dst, 2, 1) = 1.0;
      tap(dst, 3, 1) = -1.0;
    } else if (l < last) {
      for (int j = 0; j < 4; ++j) tap(dst, j, j) = 1.0;
    } else {
      tap(dst, 0, 0) = -gain;
      tap(dst, 0, 1) = gain;
      tap(dst, 1, 2) = -gain;
      tap(dst, 1, 3) = gain;
    }
  }
  return net;
}

std::uint64_t fingerprint(const DenoiserNet& net) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& l : net.layers) {
    const int dims[3] = {l.in_channels, l.out_channels, l.kernel};
    mix(dims, sizeof(dims));
    mix(l.weights.data(), l.weights.size() * sizeof(double));
    mix(l.bias.data(), l.bias.size() * sizeof(double));
  }
  return h;
}

NetGradient NetGradient::zeros_like(const DenoiserNet& net) {
  NetGradient g;
  for (const auto& l : net.layers) g.layers.push_back({std::vector<double>(l.weights.size()), std::vector<double>(l.bias.size())});
  return g;
}

NetGradient& NetGradient::operator+=(const NetGradient& other) {
  axpy(1.0, other);
  return *this;
}

NetGradient& NetGradient::operator*=(double s) {
  for (auto& l : layers) {
    for (double& w : l.weights) w *= s;
    for (double& b : l.bias) b *= s;
  }
  return *this;
}

void NetGradient::axpy(double s, const NetGradient& other) {
  if (other.layers.size() != layers.size()) throw ShapeError("NetGradient: layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& a = layers[l];
    const auto& b = other.layers[l];
    if (a.weights.size() != b.weights.size() || a.bias.size() != b.bias.size()) {
      throw ShapeError("NetGradient: layer size mismatch");
    }
    for (std::size_t j = 0; j < a.weights.size(); ++j) a.weights[j] += s * b.weights[j];
    for (std::size_t j = 0; j < a.bias.size(); ++j) a.bias[j] += s * b.bias[j];
  }
}

std::vector<double> NetGradient::flatten() const {
  std::vector<double> out;
  for (const auto& l : layers) {
    out.insert(out.end(), l.weights.begin(), l.weights.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

double NetGradient::norm() const {
  double s = 0.0;
  for (const auto& l : layers) {
    for (double w : l.weights) s += w * w;
    for (double b : l.bias) s += b * b;
  }
  return std::sqrt(s);
}

ComplexImage net_forward(const DenoiserNet& net, const ComplexImage& x, ForwardCache* cache) {
  check_input(net, x);
  if (cache) {
    cache->shape = x.shape();
    cache->net_fingerprint = fingerprint(net);
    cache->inputs.assign(net.layers.size(), {});
    cache->preacts.assign(net.layers.size() > 0 ? net.layers.size() - 1 : 0, {});
  }
  std::vector<double> act = to_channels(x);
  const int last = net.depth() - 1;
  for (int l = 0; l <= last; ++l) {
    const ConvLayer& layer = net.layers[std::size_t(l)];
    const auto geo = geometry(layer, x.shape());
    std::vector<double> out(geo.output_size());
    kernels::conv2d_forward(geo, layer.weights, layer.bias, act, out);
    if (cache) cache->inputs[std::size_t(l)] = std::move(act);
    if (l < last) {
      if (cache) cache->preacts[std::size_t(l)] = out;
      for (double& e : out) e = e > 0.0 ? e : 0.0;
    }
    act = std::move(out);
  }
  return from_channels(act, x.shape());
}

ComplexImage net_vjp_input(const DenoiserNet& net, const ForwardCache& cache, const ComplexImage& v) {
  return backward(net, cache, v, false).input;
}

NetGradient net_grad_weights(const DenoiserNet& net, const ForwardCache& cache, const ComplexImage& v) {
  return backward(net, cache, v, true).weights;
}

NetVjp net_vjp(const DenoiserNet& net, const ForwardCache& cache, const ComplexImage& v) {
  return backward(net, cache, v, true);
}

ComplexImage score_apply(const DenoiserNet& net, const ComplexImage& x) { return x - net_forward(net, x); }

std::vector<double> flatten_parameters(const DenoiserNet& net) {
  std::vector<double> out;
  out.reserve(net.parameter_count());
  for (const auto& l : net.layers) {
    out.insert(out.end(), l.weights.begin(), l.weights.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

void assign_parameters(DenoiserNet& net, std::span<const double> params) {
  if (params.size() != net.parameter_count()) {
    throw ShapeError("assign_parameters: got " + std::to_string(params.size()) + " values for " +
                     std::to_string(net.parameter_count()) + " parameters");
  }
  std::size_t at = 0;
  for (auto& l : net.layers) {
    std::copy_n(params.begin() + std::ptrdiff_t(at), l.weights.size(), l.weights.begin());
    at += l.weights.size();
    std::copy_n(params.begin() + std::ptrdiff_t(at), l.bias.size(), l.bias.begin());
    at += l.bias.size();
  }
}

double layer_spectral_norm(ConvLayer& layer, const Shape& shape, const SpectralOptions& options) {
  if (shape.size() != 2) throw ShapeError("layer_spectral_norm: shape must be [H, W]");
  const bool warm = layer.power_shape == shape &&
                    layer.power_vector.size() == std::size_t(layer.in_channels) * shape[0] * shape[1];
  return power_sigma(layer, shape, warm ? options.iters : options.cold_iters, options.seed);
}

void spectral_normalize(DenoiserNet& net, double target, const Shape& shape, const SpectralOptions& options) {
  if (!(target > 0.0 && target < 1.0)) throw std::invalid_argument("spectral_normalize: target must be in (0, 1)");
  const double bound = std::pow(target, 1.0 / double(net.depth()));
  // Power iteration approaches sigma from below, so a rescaled layer is
  // re-measured from its warm vector until the estimate stops exceeding the bound.
  for (auto& layer : net.layers) {
    for (int round = 0; round < kNormalizeRounds; ++round) {
      const double sigma = layer_spectral_norm(layer, shape, options);
      if (sigma <= bound * (1.0 + 1e-9)) break;
      const double factor = bound / sigma;
      for (double& w : layer.weights) w *= factor;
      layer.spectral_norm = bound;
    }
  }
}

}  // namespace mol
