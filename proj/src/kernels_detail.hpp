#pragma once

// Padded-buffer cores shared by the scalar and AVX2 kernels. Inputs are
// circularly pre-padded by `radius` on every side:
//   padded[c][H + 2r][W + 2r]
// These functions take raw pointers only so the AVX2 translation unit
// never instantiates library templates under different target flags.

#include "mol/kernels.hpp"

namespace mol::kernels::detail {

// out[o][y][x] = bias[o] + sum w[o][i][ky][kx] * padded[i][y+ky][x+kx]
void scalar_forward_padded(const ConvGeometry& g, const double* weights, const double* bias,
                           const double* padded, double* output);
void scalar_weights_padded(const ConvGeometry& g, const double* padded, const double* grad_out,
                           double* grad_w, double* grad_b);

void avx2_forward_padded(const ConvGeometry& g, const double* weights, const double* bias,
                         const double* padded, double* output);
void avx2_weights_padded(const ConvGeometry& g, const double* padded, const double* grad_out,
                         double* grad_w, double* grad_b);

}  // namespace mol::kernels::detail
