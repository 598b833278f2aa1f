#pragma once

#include <cstdint>
#include <vector>

#include "mol/complex_image.hpp"
#include "mol/forward_model.hpp"

namespace mol {

// Piecewise-smooth complex phantom: shaded ellipses and rectangles on a dark
// background, phase from a low-order random field. Peak magnitude is 1.
ComplexImage make_phantom(std::size_t height, std::size_t width, std::uint64_t seed);

// Complex white noise on the measurement support, real and imaginary parts N(0, sigma^2 / 2).
ComplexImage measurement_noise(const OperatorSpec& spec, double sigma, std::uint64_t seed);

struct Sample {
  ComplexImage x_gt;
  ComplexImage b;
  OperatorSpec spec;
};

struct OperatorConfig {
  OperatorKind kind = OperatorKind::kMaskedFourier;
  double acceleration = 2.0;
  double center_fraction = 0.08;
  int coils = 4;
  int kernel_size = 3;
  int factor = 2;
};

struct DatasetConfig {
  std::size_t image_size = 32;
  int count = 20;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  OperatorConfig op;
};

// The operator shared by every sample of a dataset.
OperatorSpec make_operator(const OperatorConfig& op, std::size_t image_size, std::uint64_t seed);

// Samples b = A x + n over one shared operator. Sample i depends only on (seed, i).
std::vector<Sample> make_dataset(const DatasetConfig& cfg);

}  // namespace mol
