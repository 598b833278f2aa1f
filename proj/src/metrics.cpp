#include "mol/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mol/errors.hpp"

namespace mol {

namespace {

constexpr int kWindow = 7;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;

double peak(const ComplexImage& ref) {
  double mx = 0.0;
  for (const auto& v : ref) mx = std::max(mx, std::abs(v));
  if (mx == 0.0) throw std::invalid_argument("quality metric: reference image is all zero");
  return mx;
}

}  // namespace

double psnr(const ComplexImage& x, const ComplexImage& ref) {
  require_same_shape(x, ref, "psnr");
  const double mx = peak(ref);
  const double mse = norm_squared(x - ref) / double(ref.size());
  if (!std::isfinite(mse)) return -kPsnrCap;
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 20.0 * std::log10(mx / std::sqrt(mse)));
}

double ssim(const ComplexImage& x, const ComplexImage& ref) {
  require_same_shape(x, ref, "ssim");
  if (ref.rank() != 2 || ref.height() < kWindow || ref.width() < kWindow) {
    throw ShapeError("ssim: need a 2D image of at least 7x7, got " + shape_string(ref.shape()));
  }
  const double range = peak(ref);
  const double c1 = (kK1 * range) * (kK1 * range);
  const double c2 = (kK2 * range) * (kK2 * range);
  const auto a = magnitude(x);
  const auto b = magnitude(ref);
  const std::size_t h = ref.height(), w = ref.width();
  const double n = kWindow * kWindow;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y0 = 0; y0 + kWindow <= h; ++y0) {
    for (std::size_t x0 = 0; x0 + kWindow <= w; ++x0) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = 0; dy < kWindow; ++dy) {
        for (int dx = 0; dx < kWindow; ++dx) {
          const std::size_t i = (y0 + dy) * w + x0 + dx;
          sa += a[i];
          sb += b[i];
          saa += a[i] * a[i];
          sbb += b[i] * b[i];
          sab += a[i] * b[i];
        }
      }
      const double ma = sa / n, mb = sb / n;
      const double va = saa / n - ma * ma;
      const double vb = sbb / n - mb * mb;
      const double cov = sab / n - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / double(count);
}

}  // namespace mol
