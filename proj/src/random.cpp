#include "mol/random.hpp"

namespace mol {

ComplexImage random_complex(const Shape& shape, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ComplexImage out(shape);
  for (Complex& v : out) {
    const double re = normal(rng);
    const double im = normal(rng);
    v = {re, im};
  }
  return out;
}

ComplexImage random_complex(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  return random_complex(shape, rng);
}

ComplexImage random_unit(const Shape& shape, Rng& rng) {
  ComplexImage v = random_complex(shape, rng);
  double n = norm(v);
  while (n == 0.0) {
    v = random_complex(shape, rng);
    n = norm(v);
  }
  v *= 1.0 / n;
  return v;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace mol
