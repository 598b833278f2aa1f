#include "kernels_detail.hpp"

namespace mol::kernels::detail {

void scalar_forward_padded(const ConvGeometry& g, const double* weights, const double* bias,
                           const double* padded, double* output) {
  const int k = g.kernel;
  const int h = g.height;
  const int w = g.width;
  const int pw = w + 2 * g.radius();
  const int ph = h + 2 * g.radius();
  for (int o = 0; o < g.out_channels; ++o) {
    double* out = output + std::size_t(o) * h * w;
    const double b = bias ? bias[o] : 0.0;
    for (int p = 0; p < h * w; ++p) out[p] = b;
    for (int i = 0; i < g.in_channels; ++i) {
      const double* src = padded + std::size_t(i) * ph * pw;
      const double* wk = weights + (std::size_t(o) * g.in_channels + i) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double c = wk[ky * k + kx];
          for (int y = 0; y < h; ++y) {
            const double* row = src + (y + ky) * pw + kx;
            double* dst = out + y * w;
            for (int x = 0; x < w; ++x) dst[x] += c * row[x];
          }
        }
      }
    }
  }
}

void scalar_weights_padded(const ConvGeometry& g, const double* padded, const double* grad_out,
                           double* grad_w, double* grad_b) {
  const int k = g.kernel;
  const int h = g.height;
  const int w = g.width;
  const int pw = w + 2 * g.radius();
  const int ph = h + 2 * g.radius();
  for (int o = 0; o < g.out_channels; ++o) {
    const double* go = grad_out + std::size_t(o) * h * w;
    double sb = 0.0;
    for (int p = 0; p < h * w; ++p) sb += go[p];
    grad_b[o] = sb;
    for (int i = 0; i < g.in_channels; ++i) {
      const double* src = padded + std::size_t(i) * ph * pw;
      double* gw = grad_w + (std::size_t(o) * g.in_channels + i) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          double s = 0.0;
          for (int y = 0; y < h; ++y) {
            const double* row = src + (y + ky) * pw + kx;
            const double* gr = go + y * w;
            for (int x = 0; x < w; ++x) s += gr[x] * row[x];
          }
          gw[ky * k + kx] = s;
        }
      }
    }
  }
}

}  // namespace mol::kernels::detail
