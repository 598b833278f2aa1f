#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mol {

using Complex = std::complex<double>;
using Shape = std::vector<std::size_t>;

std::size_t shape_volume(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense complex array with explicit row-major shape, e.g. [H, W] or [C, H, W].
class ComplexImage {
 public:
  ComplexImage() = default;
  explicit ComplexImage(Shape shape);
  ComplexImage(Shape shape, std::vector<Complex> data);

  static ComplexImage zeros_like(const ComplexImage& other) { return ComplexImage(other.shape_); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rank() const noexcept { return shape_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Trailing two extents; leading extents (if any) count slices.
  std::size_t height() const;
  std::size_t width() const;
  std::size_t slices() const;

  std::span<Complex> data() noexcept { return data_; }
  std::span<const Complex> data() const noexcept { return data_; }
  const std::vector<Complex>& values() const noexcept { return data_; }

  Complex& operator[](std::size_t i) { return data_[i]; }
  const Complex& operator[](std::size_t i) const { return data_[i]; }
  Complex& at(std::size_t y, std::size_t x) { return data_[y * width() + x]; }
  const Complex& at(std::size_t y, std::size_t x) const { return data_[y * width() + x]; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool same_shape(const ComplexImage& other) const noexcept { return shape_ == other.shape_; }
  bool all_finite() const noexcept;
  void fill(Complex value);

  ComplexImage& operator+=(const ComplexImage& other);
  ComplexImage& operator-=(const ComplexImage& other);
  ComplexImage& operator*=(double s);
  ComplexImage& operator*=(Complex s);

  friend bool operator==(const ComplexImage&, const ComplexImage&) = default;

 private:
  Shape shape_;
  std::vector<Complex> data_;
};

ComplexImage operator+(ComplexImage a, const ComplexImage& b);
ComplexImage operator-(ComplexImage a, const ComplexImage& b);
ComplexImage operator*(double s, ComplexImage a);
ComplexImage operator*(Complex s, ComplexImage a);

// Throws ShapeError naming `what` when the shapes differ.
void require_same_shape(const ComplexImage& a, const ComplexImage& b, const char* what);

// sum_i conj(a_i) * b_i
Complex inner(const ComplexImage& a, const ComplexImage& b);
// Re <a, b>; equals the real inner product of the stacked (re, im) vectors.
double real_inner(const ComplexImage& a, const ComplexImage& b);
double norm_squared(const ComplexImage& a);
double norm(const ComplexImage& a);

// y += s * x
void axpy(double s, const ComplexImage& x, ComplexImage& y);
void axpy(Complex s, const ComplexImage& x, ComplexImage& y);
// a * x + b * y
ComplexImage lincomb(double a, const ComplexImage& x, double b, const ComplexImage& y);
// Pointwise product.
ComplexImage hadamard(const ComplexImage& a, const ComplexImage& b);
ComplexImage conj(const ComplexImage& a);
std::vector<double> magnitude(const ComplexImage& a);

}  // namespace mol
