#include "mol/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include "kernels_detail.hpp"
#include "mol/errors.hpp"

namespace mol::kernels {

namespace {

std::vector<double> pad_circular(int channels, int h, int w, int r, const double* src) {
  const int ph = h + 2 * r;
  const int pw = w + 2 * r;
  std::vector<double> out(std::size_t(channels) * ph * pw);
  for (int c = 0; c < channels; ++c) {
    const double* s = src + std::size_t(c) * h * w;
    double* d = out.data() + std::size_t(c) * ph * pw;
    for (int yp = 0; yp < ph; ++yp) {
      const int y = ((yp - r) % h + h) % h;
      for (int xp = 0; xp < pw; ++xp) {
        const int x = ((xp - r) % w + w) % w;
        d[yp * pw + xp] = s[y * w + x];
      }
    }
  }
  return out;
}

// Adjoint of the forward correlation is a correlation with the spatially
// flipped kernel and swapped channel roles.
std::vector<double> flip_transpose(const ConvGeometry& g, const double* weights) {
  const int k = g.kernel;
  std::vector<double> out(g.weight_size());
  for (int o = 0; o < g.out_channels; ++o) {
    for (int i = 0; i < g.in_channels; ++i) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          out[((std::size_t(i) * g.out_channels + o) * k + (k - 1 - ky)) * k + (k - 1 - kx)] =
              weights[((std::size_t(o) * g.in_channels + i) * k + ky) * k + kx];
        }
      }
    }
  }
  return out;
}

ConvGeometry transposed(const ConvGeometry& g) {
  ConvGeometry t = g;
  t.in_channels = g.out_channels;
  t.out_channels = g.in_channels;
  return t;
}

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  if (const char* env = std::getenv("MOL_ISA")) {
    const std::string v(env);
    if (v == "reference") return Isa::kReference;
    if (v == "scalar") return Isa::kScalar;
    if (v == "avx2" && cpu_has_avx2()) return Isa::kAvx2;
  }
  return cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<Isa>& isa_slot() {
  static std::atomic<Isa> slot{initial_isa()};
  return slot;
}

void check_geometry(const ConvGeometry& g) {
  if (g.in_channels <= 0 || g.out_channels <= 0 || g.height <= 0 || g.width <= 0 || g.kernel <= 0 ||
      g.kernel % 2 == 0) {
    throw std::invalid_argument("conv2d: invalid geometry");
  }
}

void check_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string("conv2d: ") + what + " has " + std::to_string(got) + " values, expected " +
                     std::to_string(want));
  }
}

}  // namespace

bool isa_supported(Isa isa) { return isa != Isa::kAvx2 || cpu_has_avx2(); }

Isa active_isa() { return isa_slot().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) throw std::runtime_error("set_active_isa: CPU lacks " + std::string(isa_name(isa)));
  isa_slot().store(isa, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kReference: return "reference";
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
  }
  return "unknown";
}

namespace scalar {

void conv2d_forward(const ConvGeometry& g, const double* weights, const double* bias, const double* input,
                    double* output) {
  const auto padded = pad_circular(g.in_channels, g.height, g.width, g.radius(), input);
  detail::scalar_forward_padded(g, weights, bias, padded.data(), output);
}

void conv2d_backward_input(const ConvGeometry& g, const double* weights, const double* grad_out,
                           double* grad_in) {
  const ConvGeometry t = transposed(g);
  const auto wt = flip_transpose(g, weights);
  const auto padded = pad_circular(t.in_channels, g.height, g.width, g.radius(), grad_out);
  detail::scalar_forward_padded(t, wt.data(), nullptr, padded.data(), grad_in);
}

void conv2d_backward_weights(const ConvGeometry& g, const double* input, const double* grad_out,
                             double* grad_w, double* grad_b) {
  const auto padded = pad_circular(g.in_channels, g.height, g.width, g.radius(), input);
  detail::scalar_weights_padded(g, padded.data(), grad_out, grad_w, grad_b);
}

}  // namespace scalar

namespace avx2 {

void conv2d_forward(const ConvGeometry& g, const double* weights, const double* bias, const double* input,
                    double* output) {
  const auto padded = pad_circular(g.in_channels, g.height, g.width, g.radius(), input);
  detail::avx2_forward_padded(g, weights, bias, padded.data(), output);
}

void conv2d_backward_input(const ConvGeometry& g, const double* weights, const double* grad_out,
                           double* grad_in) {
  const ConvGeometry t = transposed(g);
  const auto wt = flip_transpose(g, weights);
  const auto padded = pad_circular(t.in_channels, g.height, g.width, g.radius(), grad_out);
  detail::avx2_forward_padded(t, wt.data(), nullptr, padded.data(), grad_in);
}

void conv2d_backward_weights(const ConvGeometry& g, const double* input, const double* grad_out,
                             double* grad_w, double* grad_b) {
  const auto padded = pad_circular(g.in_channels, g.height, g.width, g.radius(), input);
  detail::avx2_weights_padded(g, padded.data(), grad_out, grad_w, grad_b);
}

}  // namespace avx2

void conv2d_forward(const ConvGeometry& g, std::span<const double> weights, std::span<const double> bias,
                    std::span<const double> input, std::span<double> output) {
  check_geometry(g);
  check_size(weights.size(), g.weight_size(), "weights");
  if (!bias.empty()) check_size(bias.size(), std::size_t(g.out_channels), "bias");
  check_size(input.size(), g.input_size(), "input");
  check_size(output.size(), g.output_size(), "output");
  const double* b = bias.empty() ? nullptr : bias.data();
  switch (active_isa()) {
    case Isa::kReference: return reference::conv2d_forward(g, weights.data(), b, input.data(), output.data());
    case Isa::kScalar: return scalar::conv2d_forward(g, weights.data(), b, input.data(), output.data());
    case Isa::kAvx2: return avx2::conv2d_forward(g, weights.data(), b, input.data(), output.data());
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> weights,
                           std::span<const double> grad_output, std::span<double> grad_input) {
  check_geometry(g);
  check_size(weights.size(), g.weight_size(), "weights");
  check_size(grad_output.size(), g.output_size(), "grad_output");
  check_size(grad_input.size(), g.input_size(), "grad_input");
  switch (active_isa()) {
    case Isa::kReference:
      return reference::conv2d_backward_input(g, weights.data(), grad_output.data(), grad_input.data());
    case Isa::kScalar:
      return scalar::conv2d_backward_input(g, weights.data(), grad_output.data(), grad_input.data());
    case Isa::kAvx2:
      return avx2::conv2d_backward_input(g, weights.data(), grad_output.data(), grad_input.data());
  }
}

void conv2d_backward_weights(const ConvGeometry& g, std::span<const double> input,
                             std::span<const double> grad_output, std::span<double> grad_weights,
                             std::span<double> grad_bias) {
  check_geometry(g);
  check_size(input.size(), g.input_size(), "input");
  check_size(grad_output.size(), g.output_size(), "grad_output");
  check_size(grad_weights.size(), g.weight_size(), "grad_weights");
  check_size(grad_bias.size(), std::size_t(g.out_channels), "grad_bias");
  switch (active_isa()) {
    case Isa::kReference:
      return reference::conv2d_backward_weights(g, input.data(), grad_output.data(), grad_weights.data(),
                                                grad_bias.data());
    case Isa::kScalar:
      return scalar::conv2d_backward_weights(g, input.data(), grad_output.data(), grad_weights.data(),
                                             grad_bias.data());
    case Isa::kAvx2:
      return avx2::conv2d_backward_weights(g, input.data(), grad_output.data(), grad_weights.data(),
                                           grad_bias.data());
  }
}

}  // namespace mol::kernels
