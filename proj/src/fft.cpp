#include "mol/fft.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "mol/errors.hpp"

namespace mol {

namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void radix2(std::span<Complex> a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      // Twiddles from the exact angle, not by repeated multiplication.
      const Complex w = std::polar(1.0, sign * 2.0 * std::numbers::pi * double(k) / double(len));
      for (std::size_t i = 0; i < n; i += len) {
        const Complex u = a[i + k];
        const Complex v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

void direct_dft(std::span<Complex> a, bool inverse) {
  const std::size_t n = a.size();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex s{};
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t phase = (k * t) % n;
      s += a[t] * std::polar(1.0, sign * 2.0 * std::numbers::pi * double(phase) / double(n));
    }
    out[k] = s;
  }
  std::copy(out.begin(), out.end(), a.begin());
}

ComplexImage transform2(const ComplexImage& x, bool inverse) {
  if (x.rank() < 2) {
    throw ShapeError("fft2: needs a 2D (or stacked 2D) shape, got " + shape_string(x.shape()));
  }
  const std::size_t h = x.height();
  const std::size_t w = x.width();
  ComplexImage out = x;
  std::vector<Complex> column(h);
  for (std::size_t s = 0; s < x.slices(); ++s) {
    Complex* base = out.data().data() + s * h * w;
    for (std::size_t r = 0; r < h; ++r) fft1d({base + r * w, w}, inverse);
    for (std::size_t c = 0; c < w; ++c) {
      for (std::size_t r = 0; r < h; ++r) column[r] = base[r * w + c];
      fft1d(column, inverse);
      for (std::size_t r = 0; r < h; ++r) base[r * w + c] = column[r];
    }
  }
  return out;
}

}  // namespace

void fft1d(std::span<Complex> data, bool inverse) {
  if (data.empty()) return;
  if (is_power_of_two(data.size())) {
    radix2(data, inverse);
  } else {
    direct_dft(data, inverse);
  }
  const double scale = 1.0 / std::sqrt(double(data.size()));
  for (Complex& v : data) v *= scale;
}

ComplexImage fft2(const ComplexImage& x) { return transform2(x, false); }
ComplexImage ifft2(const ComplexImage& x) { return transform2(x, true); }

}  // namespace mol
