#pragma once

#include "mol/complex_image.hpp"

namespace mol {

// Returned by psnr when the images agree exactly.
inline constexpr double kPsnrCap = 1000.0;

// 20 log10(max|ref| / rmse), capped at kPsnrCap. Throws on an all-zero ref.
double psnr(const ComplexImage& x, const ComplexImage& ref);

// Mean SSIM of the magnitude images over all 7x7 windows, dynamic range max|ref|.
double ssim(const ComplexImage& x, const ComplexImage& ref);

}  // namespace mol
