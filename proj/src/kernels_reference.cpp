#include "mol/kernels.hpp"

namespace mol::kernels::reference {

namespace {

inline int wrap(int v, int n) { return ((v % n) + n) % n; }

}  // namespace

void conv2d_forward(const ConvGeometry& g, const double* weights, const double* bias, const double* input,
                    double* output) {
  const int r = g.radius();
  const int k = g.kernel;
  for (int o = 0; o < g.out_channels; ++o) {
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        double s = bias ? bias[o] : 0.0;
        for (int i = 0; i < g.in_channels; ++i) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int yy = wrap(y + ky - r, g.height);
              const int xx = wrap(x + kx - r, g.width);
              s += weights[((o * g.in_channels + i) * k + ky) * k + kx] *
                   input[(i * g.height + yy) * g.width + xx];
            }
          }
        }
        output[(o * g.height + y) * g.width + x] = s;
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, const double* weights, const double* grad_out,
                           double* grad_in) {
  const int r = g.radius();
  const int k = g.kernel;
  for (std::size_t j = 0; j < g.input_size(); ++j) grad_in[j] = 0.0;
  // Scatter each output sensitivity back to the inputs it read.
  for (int o = 0; o < g.out_channels; ++o) {
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        const double go = grad_out[(o * g.height + y) * g.width + x];
        for (int i = 0; i < g.in_channels; ++i) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int yy = wrap(y + ky - r, g.height);
              const int xx = wrap(x + kx - r, g.width);
              grad_in[(i * g.height + yy) * g.width + xx] +=
                  weights[((o * g.in_channels + i) * k + ky) * k + kx] * go;
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_weights(const ConvGeometry& g, const double* input, const double* grad_out,
                             double* grad_w, double* grad_b) {
  const int r = g.radius();
  const int k = g.kernel;
  for (int o = 0; o < g.out_channels; ++o) {
    double sb = 0.0;
    for (int p = 0; p < g.height * g.width; ++p) sb += grad_out[o * g.height * g.width + p];
    grad_b[o] = sb;
    for (int i = 0; i < g.in_channels; ++i) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          double s = 0.0;
          for (int y = 0; y < g.height; ++y) {
            for (int x = 0; x < g.width; ++x) {
              const int yy = wrap(y + ky - r, g.height);
              const int xx = wrap(x + kx - r, g.width);
              s += grad_out[(o * g.height + y) * g.width + x] * input[(i * g.height + yy) * g.width + xx];
            }
          }
          grad_w[((o * g.in_channels + i) * k + ky) * k + kx] = s;
        }
      }
    }
  }
}

}  // namespace mol::kernels::reference
