// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include "kernels_detail.hpp"

namespace mol::kernels::detail {

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// Accumulates N vectors (4N pixels) of one output row across all taps.
template <int N>
inline void forward_block(const ConvGeometry& g, const double* wo, double b, const double* padded, int y,
                          int x0, double* dst) {
  const int k = g.kernel;
  const int pw = g.width + 2 * g.radius();
  const int ph = g.height + 2 * g.radius();
  __m256d acc[N];
  for (int n = 0; n < N; ++n) acc[n] = _mm256_set1_pd(b);
  for (int i = 0; i < g.in_channels; ++i) {
    const double* src = padded + static_cast<long>(i) * ph * pw;
    const double* wk = wo + static_cast<long>(i) * k * k;
    for (int ky = 0; ky < k; ++ky) {
      const double* row = src + (y + ky) * pw + x0;
      for (int kx = 0; kx < k; ++kx) {
        const __m256d c = _mm256_set1_pd(wk[ky * k + kx]);
        for (int n = 0; n < N; ++n) {
          acc[n] = _mm256_fmadd_pd(c, _mm256_loadu_pd(row + kx + 4 * n), acc[n]);
        }
      }
    }
  }
  for (int n = 0; n < N; ++n) _mm256_storeu_pd(dst + x0 + 4 * n, acc[n]);
}

inline void forward_tail(const ConvGeometry& g, const double* wo, double b, const double* padded, int y,
                         int x0, double* dst) {
  const int k = g.kernel;
  const int pw = g.width + 2 * g.radius();
  const int ph = g.height + 2 * g.radius();
  for (int x = x0; x < g.width; ++x) {
    double s = b;
    for (int i = 0; i < g.in_channels; ++i) {
      const double* src = padded + static_cast<long>(i) * ph * pw;
      const double* wk = wo + static_cast<long>(i) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) s += wk[ky * k + kx] * src[(y + ky) * pw + x + kx];
      }
    }
    dst[x] = s;
  }
}

}  // namespace

void avx2_forward_padded(const ConvGeometry& g, const double* weights, const double* bias,
                         const double* padded, double* output) {
  const int k = g.kernel;
  const int h = g.height;
  const int w = g.width;
  for (int o = 0; o < g.out_channels; ++o) {
    const double* wo = weights + static_cast<long>(o) * g.in_channels * k * k;
    const double b = bias ? bias[o] : 0.0;
    double* out = output + static_cast<long>(o) * h * w;
    for (int y = 0; y < h; ++y) {
      double* dst = out + y * w;
      int x0 = 0;
      for (; x0 + 16 <= w; x0 += 16) forward_block<4>(g, wo, b, padded, y, x0, dst);
      for (; x0 + 4 <= w; x0 += 4) forward_block<1>(g, wo, b, padded, y, x0, dst);
      if (x0 < w) forward_tail(g, wo, b, padded, y, x0, dst);
    }
  }
}

void avx2_weights_padded(const ConvGeometry& g, const double* padded, const double* grad_out, double* grad_w,
                         double* grad_b) {
  const int k = g.kernel;
  const int h = g.height;
  const int w = g.width;
  const int pw = w + 2 * g.radius();
  const int ph = h + 2 * g.radius();
  for (int o = 0; o < g.out_channels; ++o) {
    const double* go = grad_out + static_cast<long>(o) * h * w;
    __m256d bacc = _mm256_setzero_pd();
    int p = 0;
    for (; p + 4 <= h * w; p += 4) bacc = _mm256_add_pd(bacc, _mm256_loadu_pd(go + p));
    double sb = hsum(bacc);
    for (; p < h * w; ++p) sb += go[p];
    grad_b[o] = sb;
    for (int i = 0; i < g.in_channels; ++i) {
      const double* src = padded + static_cast<long>(i) * ph * pw;
      double* gw = grad_w + (static_cast<long>(o) * g.in_channels + i) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          __m256d acc0 = _mm256_setzero_pd();
          __m256d acc1 = _mm256_setzero_pd();
          double tail = 0.0;
          for (int y = 0; y < h; ++y) {
            const double* row = src + (y + ky) * pw + kx;
            const double* gr = go + y * w;
            int x = 0;
            for (; x + 8 <= w; x += 8) {
              acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(gr + x), _mm256_loadu_pd(row + x), acc0);
              acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(gr + x + 4), _mm256_loadu_pd(row + x + 4), acc1);
            }
            for (; x + 4 <= w; x += 4) {
              acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(gr + x), _mm256_loadu_pd(row + x), acc0);
            }
            for (; x < w; ++x) tail += gr[x] * row[x];
          }
          gw[ky * k + kx] = hsum(_mm256_add_pd(acc0, acc1)) + tail;
        }
      }
    }
  }
}

}  // namespace mol::kernels::detail
