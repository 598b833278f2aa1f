#pragma once

// Multi-channel 2D convolution kernels with circular boundary handling.
//
// Layouts (row-major doubles):
//   activations  [channels][height][width]
//   weights      [out][in][kernel][kernel]
//   bias         [out]
//
// Forward is cross-correlation:
//   out[o][y][x] = bias[o] + sum_{i,ky,kx} w[o][i][ky][kx] * in[i][(y+ky-r) mod H][(x+kx-r) mod W]
// with r = kernel / 2 (kernel must be odd).
//
// Three implementations share this contract:
//   reference  direct modulo indexing, one term at a time; the equivalence oracle
//   scalar     circularly padded rows, contiguous inner loops
//   avx2       same structure as scalar with 256-bit FMA, selected when the CPU has AVX2+FMA

#include <span>
#include <string_view>

namespace mol::kernels {

struct ConvGeometry {
  int in_channels = 0;
  int out_channels = 0;
  int height = 0;
  int width = 0;
  int kernel = 3;

  int radius() const { return kernel / 2; }
  std::size_t input_size() const { return std::size_t(in_channels) * height * width; }
  std::size_t output_size() const { return std::size_t(out_channels) * height * width; }
  std::size_t weight_size() const { return std::size_t(out_channels) * in_channels * kernel * kernel; }
};

enum class Isa { kReference, kScalar, kAvx2 };

bool isa_supported(Isa isa);
Isa active_isa();
// Override dispatch (tests, benchmarks). Throws if the CPU lacks `isa`.
void set_active_isa(Isa isa);
std::string_view isa_name(Isa isa);

// Dispatched entry points; sizes are validated against `g`.
void conv2d_forward(const ConvGeometry& g, std::span<const double> weights, std::span<const double> bias,
                    std::span<const double> input, std::span<double> output);
// grad_input = W^T grad_output (overwrites grad_input).
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> weights,
                           std::span<const double> grad_output, std::span<double> grad_input);
// grad_weights, grad_bias overwritten with d<out, grad_output>/dW and /db.
void conv2d_backward_weights(const ConvGeometry& g, std::span<const double> input,
                             std::span<const double> grad_output, std::span<double> grad_weights,
                             std::span<double> grad_bias);

// Per-ISA implementations on raw pointers (no size checks). `bias` may be null.
#define MOL_DECLARE_CONV_KERNELS                                                                  \
  void conv2d_forward(const ConvGeometry& g, const double* weights, const double* bias,           \
                      const double* input, double* output);                                       \
  void conv2d_backward_input(const ConvGeometry& g, const double* weights, const double* grad_out, \
                             double* grad_in);                                                    \
  void conv2d_backward_weights(const ConvGeometry& g, const double* input, const double* grad_out, \
                               double* grad_w, double* grad_b);

namespace reference {
MOL_DECLARE_CONV_KERNELS
}
namespace scalar {
MOL_DECLARE_CONV_KERNELS
}
namespace avx2 {
MOL_DECLARE_CONV_KERNELS
}

#undef MOL_DECLARE_CONV_KERNELS

}  // namespace mol::kernels
