#include "mol/forward_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "mol/errors.hpp"
#include "mol/fft.hpp"
#include "mol/random.hpp"

namespace mol {

std::string_view operator_kind_name(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::kIdentity: return "identity";
    case OperatorKind::kDiagonalMask: return "diagonal_mask";
    case OperatorKind::kMaskedFourier: return "masked_fourier";
    case OperatorKind::kMulticoilSense: return "multicoil_sense";
    case OperatorKind::kBlurDownsample: return "blur_downsample";
  }
  return "unknown";
}

OperatorKind parse_operator_kind(std::string_view name) {
  for (OperatorKind k : {OperatorKind::kIdentity, OperatorKind::kDiagonalMask, OperatorKind::kMaskedFourier,
                         OperatorKind::kMulticoilSense, OperatorKind::kBlurDownsample}) {
    if (operator_kind_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown operator kind '" + std::string(name) + "'");
}

namespace {

bool is_masked(OperatorKind kind) {
  return kind == OperatorKind::kDiagonalMask || kind == OperatorKind::kMaskedFourier ||
         kind == OperatorKind::kMulticoilSense;
}

bool mask_has_zero(const std::vector<double>& mask) {
  return std::any_of(mask.begin(), mask.end(), [](double v) { return v == 0.0; });
}

void check_image(const OperatorSpec& spec, const ComplexImage& x, const char* what) {
  if (x.shape() != spec.image_shape) {
    throw ShapeError(std::string(what) + ": image shape " + shape_string(x.shape()) + " does not match operator " +
                     shape_string(spec.image_shape));
  }
}

void check_measurement(const OperatorSpec& spec, const ComplexImage& y, const char* what) {
  if (y.shape() != spec.measurement_shape()) {
    throw ShapeError(std::string(what) + ": measurement shape " + shape_string(y.shape()) +
                     " does not match operator " + shape_string(spec.measurement_shape()));
  }
}

void apply_mask_inplace(const std::vector<double>& mask, ComplexImage& y) {
  const std::size_t plane = mask.size();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i % plane];
}

// Circular correlation with the blur taps, offset (k-1)/2.
ComplexImage blur(const OperatorSpec& spec, const ComplexImage& x) {
  const int h = int(spec.height());
  const int w = int(spec.width());
  const int k = spec.kernel_size;
  const int r = (k - 1) / 2;
  ComplexImage out(spec.image_shape);
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      Complex s{};
      for (int ky = 0; ky < k; ++ky) {
        const int sy = ((y + ky - r) % h + h) % h;
        for (int kx = 0; kx < k; ++kx) {
          const int sx = ((xx + kx - r) % w + w) % w;
          s += spec.kernel[ky * k + kx] * x[std::size_t(sy) * w + sx];
        }
      }
      out[std::size_t(y) * w + xx] = s;
    }
  }
  return out;
}

ComplexImage blur_adjoint(const OperatorSpec& spec, const ComplexImage& u) {
  const int h = int(spec.height());
  const int w = int(spec.width());
  const int k = spec.kernel_size;
  const int r = (k - 1) / 2;
  ComplexImage out(spec.image_shape);
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      const Complex v = u[std::size_t(y) * w + xx];
      if (v == Complex{}) continue;
      for (int ky = 0; ky < k; ++ky) {
        const int sy = ((y + ky - r) % h + h) % h;
        for (int kx = 0; kx < k; ++kx) {
          const int sx = ((xx + kx - r) % w + w) % w;
          out[std::size_t(sy) * w + sx] += spec.kernel[ky * k + kx] * v;
        }
      }
    }
  }
  return out;
}

OperatorSpec finish(OperatorSpec spec) {
  spec.validate();
  const MuBounds mu = estimate_mu_bounds(spec);
  spec.mu_min = mu.mu_min;
  spec.mu_max = mu.mu_max;
  return spec;
}

}  // namespace

Shape OperatorSpec::measurement_shape() const {
  switch (kind) {
    case OperatorKind::kMulticoilSense: return {coil_maps.size(), height(), width()};
    case OperatorKind::kBlurDownsample:
      return {height() / std::size_t(factor), width() / std::size_t(factor)};
    default: return image_shape;
  }
}

bool OperatorSpec::has_closed_form_prox() const {
  return kind == OperatorKind::kIdentity || kind == OperatorKind::kDiagonalMask ||
         kind == OperatorKind::kMaskedFourier;
}

void OperatorSpec::validate() const {
  if (image_shape.size() != 2 || image_shape[0] == 0 || image_shape[1] == 0) {
    throw std::invalid_argument("OperatorSpec: image shape must be [H, W], got " + shape_string(image_shape));
  }
  const std::size_t plane = height() * width();
  if (is_masked(kind)) {
    if (mask.size() != plane) throw std::invalid_argument("OperatorSpec: mask size does not match image");
    for (double v : mask) {
      if (v != 0.0 && v != 1.0) throw std::invalid_argument("OperatorSpec: mask entries must be 0 or 1");
    }
  }
  if (kind == OperatorKind::kMulticoilSense) {
    if (coil_maps.empty()) throw std::invalid_argument("OperatorSpec: multicoil needs at least one coil map");
    for (const auto& s : coil_maps) {
      if (s.shape() != image_shape) throw std::invalid_argument("OperatorSpec: coil map shape mismatch");
    }
    for (std::size_t p = 0; p < plane; ++p) {
      double sum = 0.0;
      for (const auto& s : coil_maps) sum += std::norm(s[p]);
      if (std::abs(sum - 1.0) > 1e-6) {
        throw std::invalid_argument("OperatorSpec: coil maps must satisfy sum |S_c|^2 = 1 at every pixel");
      }
    }
  }
  if (kind == OperatorKind::kBlurDownsample) {
    if (factor < 1 || height() % std::size_t(factor) || width() % std::size_t(factor)) {
      throw std::invalid_argument("OperatorSpec: decimation factor must divide the image extents");
    }
    if (kernel_size < 1 || kernel.size() != std::size_t(kernel_size) * kernel_size) {
      throw std::invalid_argument("OperatorSpec: blur kernel size mismatch");
    }
  }
  if (mu_min < 0.0 || mu_min > mu_max + 1e-12) {
    // Only checked once the factories have populated the spectrum.
    if (mu_max != 0.0 || mu_min != 0.0) throw std::invalid_argument("OperatorSpec: need 0 <= mu_min <= mu_max");
  }
}

OperatorSpec make_identity(const Shape& image_shape) {
  OperatorSpec spec;
  spec.kind = OperatorKind::kIdentity;
  spec.image_shape = image_shape;
  return finish(std::move(spec));
}

OperatorSpec make_diagonal_mask(const Shape& image_shape, std::vector<double> mask) {
  OperatorSpec spec;
  spec.kind = OperatorKind::kDiagonalMask;
  spec.image_shape = image_shape;
  spec.mask = std::move(mask);
  return finish(std::move(spec));
}

OperatorSpec make_masked_fourier(const Shape& image_shape, std::vector<double> mask) {
  OperatorSpec spec;
  spec.kind = OperatorKind::kMaskedFourier;
  spec.image_shape = image_shape;
  spec.mask = std::move(mask);
  return finish(std::move(spec));
}

OperatorSpec make_multicoil_sense(const Shape& image_shape, std::vector<double> mask,
                                  std::vector<ComplexImage> coil_maps) {
  OperatorSpec spec;
  spec.kind = OperatorKind::kMulticoilSense;
  spec.image_shape = image_shape;
  spec.mask = std::move(mask);
  spec.coil_maps = std::move(coil_maps);
  return finish(std::move(spec));
}

OperatorSpec make_blur_downsample(const Shape& image_shape, int kernel_size, int factor) {
  OperatorSpec spec;
  spec.kind = OperatorKind::kBlurDownsample;
  spec.image_shape = image_shape;
  spec.kernel_size = kernel_size;
  spec.factor = factor;
  if (kernel_size >= 1) {
    spec.kernel.assign(std::size_t(kernel_size) * kernel_size, 1.0 / double(kernel_size * kernel_size));
  }
  return finish(std::move(spec));
}

ComplexImage apply(const OperatorSpec& spec, const ComplexImage& x) {
  check_image(spec, x, "apply");
  switch (spec.kind) {
    case OperatorKind::kIdentity: return x;
    case OperatorKind::kDiagonalMask: {
      ComplexImage y = x;
      apply_mask_inplace(spec.mask, y);
      return y;
    }
    case OperatorKind::kMaskedFourier: {
      ComplexImage y = fft2(x);
      apply_mask_inplace(spec.mask, y);
      return y;
    }
    case OperatorKind::kMulticoilSense: {
      const std::size_t plane = x.size();
      ComplexImage stacked(spec.measurement_shape());
      for (std::size_t c = 0; c < spec.coil_maps.size(); ++c) {
        ComplexImage yc = fft2(hadamard(spec.coil_maps[c], x));
        apply_mask_inplace(spec.mask, yc);
        std::copy(yc.begin(), yc.end(), stacked.begin() + std::ptrdiff_t(c * plane));
      }
      return stacked;
    }
    case OperatorKind::kBlurDownsample: {
      const ComplexImage blurred = blur(spec, x);
      ComplexImage y(spec.measurement_shape());
      const std::size_t f = std::size_t(spec.factor);
      const std::size_t wl = y.width();
      for (std::size_t i = 0; i < y.height(); ++i) {
        for (std::size_t j = 0; j < wl; ++j) y[i * wl + j] = blurred[(i * f) * spec.width() + j * f];
      }
      return y;
    }
  }
  return x;
}

ComplexImage adjoint(const OperatorSpec& spec, const ComplexImage& y) {
  check_measurement(spec, y, "adjoint");
  switch (spec.kind) {
    case OperatorKind::kIdentity: return y;
    case OperatorKind::kDiagonalMask: {
      ComplexImage x = y;
      apply_mask_inplace(spec.mask, x);
      return x;
    }
    case OperatorKind::kMaskedFourier: {
      ComplexImage masked = y;
      apply_mask_inplace(spec.mask, masked);
      return ifft2(masked);
    }
    case OperatorKind::kMulticoilSense: {
      const std::size_t plane = spec.height() * spec.width();
      ComplexImage x(spec.image_shape);
      for (std::size_t c = 0; c < spec.coil_maps.size(); ++c) {
        ComplexImage yc(spec.image_shape,
                        std::vector<Complex>(y.begin() + std::ptrdiff_t(c * plane),
                                             y.begin() + std::ptrdiff_t((c + 1) * plane)));
        apply_mask_inplace(spec.mask, yc);
        const ComplexImage img = ifft2(yc);
        const ComplexImage& s = spec.coil_maps[c];
        for (std::size_t p = 0; p < plane; ++p) x[p] += std::conj(s[p]) * img[p];
      }
      return x;
    }
    case OperatorKind::kBlurDownsample: {
      ComplexImage up(spec.image_shape);
      const std::size_t f = std::size_t(spec.factor);
      const std::size_t wl = y.width();
      for (std::size_t i = 0; i < y.height(); ++i) {
        for (std::size_t j = 0; j < wl; ++j) up[(i * f) * spec.width() + j * f] = y[i * wl + j];
      }
      return blur_adjoint(spec, up);
    }
  }
  return y;
}

ComplexImage normal_apply(const OperatorSpec& spec, const ComplexImage& x) {
  return adjoint(spec, apply(spec, x));
}

ComplexImage project_measurement(const OperatorSpec& spec, const ComplexImage& y) {
  check_measurement(spec, y, "project_measurement");
  ComplexImage out = y;
  if (is_masked(spec.kind)) apply_mask_inplace(spec.mask, out);
  return out;
}

SolveResult solve_normal(const OperatorSpec& spec, const ComplexImage& rhs, double c,
                         const SolveOptions& options) {
  check_image(spec, rhs, "solve_normal");
  if (!(c >= 0.0) || !std::isfinite(c)) throw std::invalid_argument("solve_normal: weight must be >= 0");
  SolveResult result;
  if (spec.has_closed_form_prox() && !options.force_cg) {
    result.closed_form = true;
    switch (spec.kind) {
      case OperatorKind::kIdentity:
        result.x = (1.0 / (1.0 + c)) * rhs;
        break;
      case OperatorKind::kDiagonalMask:
        result.x = rhs;
        for (std::size_t i = 0; i < rhs.size(); ++i) result.x[i] /= 1.0 + c * spec.mask[i];
        break;
      default: {
        // A^H A = F^H M F is diagonal in k-space.
        ComplexImage k = fft2(rhs);
        for (std::size_t i = 0; i < k.size(); ++i) k[i] /= 1.0 + c * spec.mask[i];
        result.x = ifft2(k);
        break;
      }
    }
    return result;
  }
  const LinearMap op = [&](const ComplexImage& v) {
    ComplexImage out = normal_apply(spec, v);
    out *= c;
    out += v;
    return out;
  };
  CgResult cg = conjugate_gradient(op, rhs, options.cg);
  result.x = std::move(cg.x);
  result.iterations = cg.iterations;
  result.relative_residual = cg.relative_residual;
  result.converged = cg.converged;
  return result;
}

SolveResult prox_data(const OperatorSpec& spec, const ComplexImage& u, const ComplexImage& b, double alpha,
                      double lambda, const SolveOptions& options) {
  if (!(alpha >= 0.0) || !(lambda > 0.0)) throw std::invalid_argument("prox_data: need alpha >= 0 and lambda > 0");
  const double c = alpha * lambda;
  ComplexImage rhs = adjoint(spec, b);
  rhs *= c;
  rhs += u;
  return solve_normal(spec, rhs, c, options);
}

ComplexImage sense_init(const OperatorSpec& spec, const ComplexImage& b, double lambda0,
                        const SolveOptions& options) {
  if (!(lambda0 > 0.0)) throw std::invalid_argument("sense_init: lambda0 must be > 0");
  ComplexImage rhs = adjoint(spec, b);
  rhs *= lambda0;
  SolveResult solved = solve_normal(spec, rhs, lambda0, options);
  if (!solved.converged) throw SolverError("sense_init: CG did not converge");
  return std::move(solved.x);
}

MuBounds estimate_mu_bounds(const OperatorSpec& spec, int iters, std::uint64_t seed) {
  MuBounds mu;
  switch (spec.kind) {
    case OperatorKind::kIdentity:
      return {1.0, 1.0};
    case OperatorKind::kDiagonalMask:
    case OperatorKind::kMaskedFourier:
    case OperatorKind::kMulticoilSense:
      mu.mu_min = mask_has_zero(spec.mask) ? 0.0 : 1.0;
      break;
    case OperatorKind::kBlurDownsample:
      if (spec.factor > 1) {
        mu.mu_min = 0.0;
      } else {
        // Circular blur is diagonalized by the DFT; mu_min = min |K^|^2.
        ComplexImage impulse(spec.image_shape);
        impulse[0] = 1.0;
        const ComplexImage response = fft2(blur(spec, impulse));
        const double scale = double(response.size());
        double lo = std::numeric_limits<double>::infinity();
        for (const Complex& v : response) lo = std::min(lo, std::norm(v) * scale);
        mu.mu_min = lo;
      }
      break;
  }
  if (is_masked(spec.kind) && std::all_of(spec.mask.begin(), spec.mask.end(), [](double v) { return v == 0.0; })) {
    return {0.0, 0.0};
  }
  const LinearMap normal = [&](const ComplexImage& v) { return normal_apply(spec, v); };
  mu.mu_max = power_iteration(normal, spec.image_shape, iters, seed).eigenvalue;
  mu.mu_max = std::max(mu.mu_max, mu.mu_min);
  return mu;
}

std::vector<double> make_variable_density_mask(std::size_t height, std::size_t width, double acceleration,
                                               double center_fraction, std::uint64_t seed) {
  if (!(acceleration >= 1.0)) throw std::invalid_argument("mask: acceleration must be >= 1");
  if (!(center_fraction >= 0.0 && center_fraction <= 1.0)) {
    throw std::invalid_argument("mask: center_fraction must be in [0, 1]");
  }
  const std::size_t total = height * width;
  const std::size_t target = std::max<std::size_t>(1, std::size_t(std::lround(double(total) / acceleration)));
  std::vector<double> mask(total, 0.0);

  auto signed_freq = [](std::size_t k, std::size_t n) {
    return k <= n / 2 ? double(k) : double(k) - double(n);
  };
  const double ch = center_fraction * double(height) / 2.0;
  const double cw = center_fraction * double(width) / 2.0;
  std::size_t chosen = 0;
  std::vector<std::pair<double, std::size_t>> keys;
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double fy = signed_freq(y, height);
      const double fx = signed_freq(x, width);
      const std::size_t idx = y * width + x;
      if (std::abs(fy) <= ch && std::abs(fx) <= cw && chosen < target) {
        mask[idx] = 1.0;
        ++chosen;
        continue;
      }
      const double ry = fy / (double(height) / 2.0);
      const double rx = fx / (double(width) / 2.0);
      const double radius = std::min(1.0, std::sqrt(ry * ry + rx * rx) / std::numbers::sqrt2);
      const double weight = std::pow(1.0 - radius, 2.0) + 0.02;
      // Weighted sampling without replacement: keep the largest u^(1/w).
      keys.emplace_back(std::log(std::max(unif(rng), 1e-300)) / weight, idx);
    }
  }
  const std::size_t remaining = std::min(target - chosen, keys.size());
  std::partial_sort(keys.begin(), keys.begin() + std::ptrdiff_t(remaining), keys.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  for (std::size_t i = 0; i < remaining; ++i) mask[keys[i].second] = 1.0;
  return mask;
}

std::vector<ComplexImage> make_coil_maps(std::size_t height, std::size_t width, int coils, std::uint64_t seed) {
  if (coils < 1) throw std::invalid_argument("coil maps: need at least one coil");
  Rng rng(seed);
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  const double cy = (double(height) - 1.0) / 2.0;
  const double cx = (double(width) - 1.0) / 2.0;
  const double spread = 0.6 * double(std::max(height, width));
  std::vector<ComplexImage> maps;
  for (int c = 0; c < coils; ++c) {
    const double angle = 2.0 * std::numbers::pi * (double(c) / coils + jitter(rng));
    const double py = cy + 0.6 * cy * std::sin(angle);
    const double px = cx + 0.6 * cx * std::cos(angle);
    const double phase_y = jitter(rng) * 2.0 * std::numbers::pi / double(height);
    const double phase_x = jitter(rng) * 2.0 * std::numbers::pi / double(width);
    ComplexImage s({height, width});
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double d2 = (double(y) - py) * (double(y) - py) + (double(x) - px) * (double(x) - px);
        const double amp = std::exp(-d2 / (2.0 * spread * spread));
        s.at(y, x) = std::polar(amp, angle + phase_y * double(y) + phase_x * double(x));
      }
    }
    maps.push_back(std::move(s));
  }
  for (std::size_t p = 0; p < height * width; ++p) {
    double sum = 0.0;
    for (const auto& s : maps) sum += std::norm(s[p]);
    const double inv = 1.0 / std::sqrt(sum);
    for (auto& s : maps) s[p] *= inv;
  }
  return maps;
}

}  // namespace mol
