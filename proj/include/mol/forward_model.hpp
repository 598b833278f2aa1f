#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mol/complex_image.hpp"
#include "mol/linalg.hpp"

namespace mol {

enum class OperatorKind { kIdentity, kDiagonalMask, kMaskedFourier, kMulticoilSense, kBlurDownsample };

std::string_view operator_kind_name(OperatorKind kind);
OperatorKind parse_operator_kind(std::string_view name);

// Linear measurement model b = A x + n. Immutable once built by one of the
// make_* factories, which also fill the cached spectrum of A^H A.
struct OperatorSpec {
  OperatorKind kind = OperatorKind::kIdentity;
  Shape image_shape;                    // [H, W]
  std::vector<double> mask;             // H*W entries in {0, 1}; masked kinds
  std::vector<ComplexImage> coil_maps;  // each [H, W]; multicoil only
  std::vector<double> kernel;           // kernel_size^2 blur taps; blur_downsample only
  int kernel_size = 0;
  int factor = 1;                       // decimation factor; blur_downsample only
  double mu_min = 0.0;                  // extremal eigenvalues of A^H A
  double mu_max = 0.0;

  std::size_t height() const { return image_shape.at(0); }
  std::size_t width() const { return image_shape.at(1); }
  Shape measurement_shape() const;
  bool has_closed_form_prox() const;
  // Throws std::invalid_argument when the fields violate the kind's invariants.
  void validate() const;
};

struct MuBounds {
  double mu_min = 0.0;
  double mu_max = 0.0;
};

OperatorSpec make_identity(const Shape& image_shape);
OperatorSpec make_diagonal_mask(const Shape& image_shape, std::vector<double> mask);
OperatorSpec make_masked_fourier(const Shape& image_shape, std::vector<double> mask);
OperatorSpec make_multicoil_sense(const Shape& image_shape, std::vector<double> mask,
                                  std::vector<ComplexImage> coil_maps);
// Box-average blur of `kernel_size` taps per axis followed by decimation by `factor`.
OperatorSpec make_blur_downsample(const Shape& image_shape, int kernel_size, int factor);

ComplexImage apply(const OperatorSpec& spec, const ComplexImage& x);
ComplexImage adjoint(const OperatorSpec& spec, const ComplexImage& y);
// A^H A x
ComplexImage normal_apply(const OperatorSpec& spec, const ComplexImage& x);
// Zeroes measurement entries that the operator never produces (unsampled k-space).
ComplexImage project_measurement(const OperatorSpec& spec, const ComplexImage& y);

struct SolveResult {
  ComplexImage x;
  int iterations = 0;  // CG iterations; 0 for closed forms
  double relative_residual = 0.0;
  bool converged = true;
  bool closed_form = false;
};

struct SolveOptions {
  CgOptions cg;
  bool force_cg = false;  // skip the closed form even when one exists
};

// (I + c A^H A)^{-1} rhs, c >= 0.
SolveResult solve_normal(const OperatorSpec& spec, const ComplexImage& rhs, double c,
                         const SolveOptions& options = {});
// Proximal map of the data term: (I + alpha lambda A^H A)^{-1}(u + alpha lambda A^H b).
SolveResult prox_data(const OperatorSpec& spec, const ComplexImage& u, const ComplexImage& b, double alpha,
                      double lambda, const SolveOptions& options = {});
// lambda0 (I + lambda0 A^H A)^{-1} A^H b
ComplexImage sense_init(const OperatorSpec& spec, const ComplexImage& b, double lambda0 = 100.0,
                        const SolveOptions& options = {});

// mu_max by power iteration on A^H A; mu_min analytically.
MuBounds estimate_mu_bounds(const OperatorSpec& spec, int iters = 100, std::uint64_t seed = 7);

// Variable-density k-space mask in unshifted FFT layout (DC at [0, 0]). Keeps
// a fully sampled low-frequency block and draws the rest with density falling
// off with frequency radius. Exactly round(H*W/acceleration) ones.
std::vector<double> make_variable_density_mask(std::size_t height, std::size_t width, double acceleration,
                                               double center_fraction, std::uint64_t seed);
// Smooth Gaussian-profile coil sensitivities normalized so sum_c |S_c|^2 = 1.
std::vector<ComplexImage> make_coil_maps(std::size_t height, std::size_t width, int coils,
                                         std::uint64_t seed);

}  // namespace mol
