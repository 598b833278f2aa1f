#include "mol/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "mol/random.hpp"

namespace mol {

namespace {

constexpr std::uint64_t kMaskStream = 1;
constexpr std::uint64_t kCoilStream = 2;
constexpr std::uint64_t kPhantomStream = 3;
constexpr std::uint64_t kNoiseStream = 4;

}  // namespace

ComplexImage make_phantom(std::size_t height, std::size_t width, std::uint64_t seed) {
  if (height == 0 || width == 0) throw std::invalid_argument("make_phantom: empty image");
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> mag(height * width, 0.0);

  const int shapes = 3 + int(u(rng) * 4.0);
  for (int s = 0; s < shapes; ++s) {
    const bool ellipse = u(rng) < 0.7;
    const double cy = 0.2 + 0.6 * u(rng), cx = 0.2 + 0.6 * u(rng);
    const double ry = 0.08 + 0.25 * u(rng), rx = 0.08 + 0.25 * u(rng);
    const double theta = std::numbers::pi * u(rng);
    const double level = 0.2 + 0.8 * u(rng);
    // Linear shading across the shape.
    const double gy = 0.6 * (u(rng) - 0.5), gx = 0.6 * (u(rng) - 0.5);
    const double ct = std::cos(theta), st = std::sin(theta);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double py = (double(y) + 0.5) / double(height) - cy;
        const double px = (double(x) + 0.5) / double(width) - cx;
        const double a = (ct * px + st * py) / rx;
        const double b = (-st * px + ct * py) / ry;
        const bool inside = ellipse ? a * a + b * b <= 1.0 : std::abs(a) <= 1.0 && std::abs(b) <= 1.0;
        if (inside) mag[y * width + x] = std::max(0.0, level * (1.0 + gy * b + gx * a));
      }
    }
  }

  double c[6];
  for (double& v : c) v = std::numbers::pi * (u(rng) - 0.5);
  ComplexImage out({height, width});
  const double peak = std::max(1e-12, *std::max_element(mag.begin(), mag.end()));
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double py = double(y) / double(height) - 0.5;
      const double px = double(x) / double(width) - 0.5;
      const double phase = c[0] + c[1] * px + c[2] * py + c[3] * px * py + c[4] * px * px + c[5] * py * py;
      out.at(y, x) = std::polar(mag[y * width + x] / peak, phase);
    }
  }
  return out;
}

ComplexImage measurement_noise(const OperatorSpec& spec, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("measurement_noise: sigma must be >= 0");
  ComplexImage n = random_complex(spec.measurement_shape(), seed);
  n *= sigma / std::sqrt(2.0);
  return project_measurement(spec, n);
}

OperatorSpec make_operator(const OperatorConfig& op, std::size_t image_size, std::uint64_t seed) {
  const Shape shape{image_size, image_size};
  auto mask = [&] {
    return make_variable_density_mask(image_size, image_size, op.acceleration, op.center_fraction,
                                      derive_seed(seed, kMaskStream));
  };
  switch (op.kind) {
    case OperatorKind::kIdentity:
      return make_identity(shape);
    case OperatorKind::kDiagonalMask:
      return make_diagonal_mask(shape, mask());
    case OperatorKind::kMaskedFourier:
      return make_masked_fourier(shape, mask());
    case OperatorKind::kMulticoilSense:
      return make_multicoil_sense(shape, mask(),
                                  make_coil_maps(image_size, image_size, op.coils, derive_seed(seed, kCoilStream)));
    case OperatorKind::kBlurDownsample:
      return make_blur_downsample(shape, op.kernel_size, op.factor);
  }
  throw std::invalid_argument("make_operator: unknown operator kind");
}

std::vector<Sample> make_dataset(const DatasetConfig& cfg) {
  if (cfg.count < 0) throw std::invalid_argument("make_dataset: count must be >= 0");
  const OperatorSpec spec = make_operator(cfg.op, cfg.image_size, cfg.seed);
  std::vector<Sample> out;
  out.reserve(std::size_t(cfg.count));
  const std::uint64_t phantoms = derive_seed(cfg.seed, kPhantomStream);
  const std::uint64_t noise = derive_seed(cfg.seed, kNoiseStream);
  for (int i = 0; i < cfg.count; ++i) {
    Sample s;
    s.x_gt = make_phantom(cfg.image_size, cfg.image_size, derive_seed(phantoms, std::uint64_t(i)));
    s.b = apply(spec, s.x_gt);
    if (cfg.noise_sigma > 0.0) s.b += measurement_noise(spec, cfg.noise_sigma, derive_seed(noise, std::uint64_t(i)));
    s.spec = spec;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mol
