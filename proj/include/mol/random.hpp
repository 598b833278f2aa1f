#pragma once

#include <cstdint>
#include <random>

#include "mol/complex_image.hpp"

namespace mol {

using Rng = std::mt19937_64;

// Entries with independent N(0, 1) real and imaginary parts.
ComplexImage random_complex(const Shape& shape, Rng& rng);
ComplexImage random_complex(const Shape& shape, std::uint64_t seed);

// Uniformly random direction, unit Euclidean norm.
ComplexImage random_unit(const Shape& shape, Rng& rng);

// Derive an independent stream seed from a parent seed and a label.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace mol
