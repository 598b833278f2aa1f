#include "mol/complex_image.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "mol/errors.hpp"

namespace mol {

std::size_t shape_volume(const Shape& shape) {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("ComplexImage: zero extent in shape " + shape_string(shape));
  }
}

}  // namespace

ComplexImage::ComplexImage(Shape shape) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_volume(shape_), Complex{});
}

ComplexImage::ComplexImage(Shape shape, std::vector<Complex> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (data_.size() != shape_volume(shape_)) {
    throw ShapeError("ComplexImage: " + std::to_string(data_.size()) +
                     " values do not fill shape " + shape_string(shape_));
  }
}

std::size_t ComplexImage::height() const {
  if (rank() < 2) throw ShapeError("ComplexImage: rank < 2 has no height");
  return shape_[rank() - 2];
}

std::size_t ComplexImage::width() const {
  if (rank() < 1) throw ShapeError("ComplexImage: empty shape has no width");
  return shape_.back();
}

std::size_t ComplexImage::slices() const {
  if (rank() < 2) return 1;
  return size() / (height() * width());
}

bool ComplexImage::all_finite() const noexcept {
  for (const Complex& v : data_) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  }
  return true;
}

void ComplexImage::fill(Complex value) { std::fill(data_.begin(), data_.end(), value); }

ComplexImage& ComplexImage::operator+=(const ComplexImage& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

ComplexImage& ComplexImage::operator-=(const ComplexImage& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

ComplexImage& ComplexImage::operator*=(double s) {
  for (Complex& v : data_) v *= s;
  return *this;
}

ComplexImage& ComplexImage::operator*=(Complex s) {
  for (Complex& v : data_) v *= s;
  return *this;
}

ComplexImage operator+(ComplexImage a, const ComplexImage& b) { return a += b; }
ComplexImage operator-(ComplexImage a, const ComplexImage& b) { return a -= b; }
ComplexImage operator*(double s, ComplexImage a) { return a *= s; }
ComplexImage operator*(Complex s, ComplexImage a) { return a *= s; }

void require_same_shape(const ComplexImage& a, const ComplexImage& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

Complex inner(const ComplexImage& a, const ComplexImage& b) {
  require_same_shape(a, b, "inner");
  double re = 0.0;
  double im = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Complex& p = a[i];
    const Complex& q = b[i];
    re += p.real() * q.real() + p.imag() * q.imag();
    im += p.real() * q.imag() - p.imag() * q.real();
  }
  return {re, im};
}

double real_inner(const ComplexImage& a, const ComplexImage& b) {
  require_same_shape(a, b, "real_inner");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
  }
  return s;
}

double norm_squared(const ComplexImage& a) {
  double s = 0.0;
  for (const Complex& v : a) s += v.real() * v.real() + v.imag() * v.imag();
  return s;
}

double norm(const ComplexImage& a) { return std::sqrt(norm_squared(a)); }

void axpy(double s, const ComplexImage& x, ComplexImage& y) {
  require_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

void axpy(Complex s, const ComplexImage& x, ComplexImage& y) {
  require_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

ComplexImage lincomb(double a, const ComplexImage& x, double b, const ComplexImage& y) {
  require_same_shape(x, y, "lincomb");
  ComplexImage out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
  return out;
}

ComplexImage hadamard(const ComplexImage& a, const ComplexImage& b) {
  require_same_shape(a, b, "hadamard");
  ComplexImage out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

ComplexImage conj(const ComplexImage& a) {
  ComplexImage out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::conj(a[i]);
  return out;
}

std::vector<double> magnitude(const ComplexImage& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::abs(a[i]);
  return out;
}

}  // namespace mol
