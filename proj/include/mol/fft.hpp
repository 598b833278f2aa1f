#pragma once

#include <span>

#include "mol/complex_image.hpp"

namespace mol {

// Unitary 2D DFT over the trailing two axes (each leading index is an
// independent slice). Radix-2 for power-of-two extents, direct DFT otherwise.
ComplexImage fft2(const ComplexImage& x);
ComplexImage ifft2(const ComplexImage& x);

// In-place unitary 1D transform; exposed for tests.
void fft1d(std::span<Complex> data, bool inverse);

}  // namespace mol
