#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace renoise {

// All domain failures surface as renoise::Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_volume(const Shape& shape) {
  if (shape.empty()) throw Error("degenerate shape");
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw Error("degenerate shape");
    n *= d;
  }
  return n;
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// A point on a diffusion trajectory: a dense row-major array of doubles.
///
/// Every latent-shaped quantity of the inversion (z_t, renoising estimates,
/// predicted noise maps, injected noise) is a Latent. Arithmetic is
/// elementwise and requires identical shapes.
class Latent {
 public:
  Latent() = default;

  explicit Latent(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {}

  Latent(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_volume(shape_)) {
      throw Error("latent data length " + std::to_string(data_.size()) +
                  " does not match shape " + shape_string(shape_));
    }
  }

  static Latent zeros_like(const Latent& other) { return Latent(other.shape_, 0.0); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rank() const noexcept { return shape_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  bool same_shape(const Latent& other) const noexcept { return shape_ == other.shape_; }

  void require_same_shape(const Latent& other, const char* what) const {
    if (!same_shape(other)) {
      throw Error(std::string(what) + ": shape mismatch " + shape_string(shape_) + " vs " +
                  shape_string(other.shape_));
    }
  }

  Latent& operator+=(const Latent& rhs) {
    require_same_shape(rhs, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
    return *this;
  }

  Latent& operator-=(const Latent& rhs) {
    require_same_shape(rhs, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
    return *this;
  }

  Latent& operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
  }

  // this += s * x
  Latent& add_scaled(double s, const Latent& x) {
    require_same_shape(x, "add_scaled");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * x.data_[i];
    return *this;
  }

  friend Latent operator+(Latent lhs, const Latent& rhs) { return lhs += rhs; }
  friend Latent operator-(Latent lhs, const Latent& rhs) { return lhs -= rhs; }
  friend Latent operator*(double s, Latent x) { return x *= s; }
  friend Latent operator*(Latent x, double s) { return x *= s; }

  friend bool operator==(const Latent& a, const Latent& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline double dot(const Latent& a, const Latent& b) {
  a.require_same_shape(b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Latent& a) { return std::sqrt(dot(a, a)); }

inline double max_abs(const Latent& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

inline double max_abs_diff(const Latent& a, const Latent& b) {
  a.require_same_shape(b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double distance(const Latent& a, const Latent& b) { return norm2(a - b); }

inline bool all_finite(const Latent& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](double v) { return std::isfinite(v); });
}

// out[i] = f(a[i])
template <class F>
Latent map(const Latent& a, F&& f) {
  Latent out = a;
  for (double& v : out.data()) v = f(v);
  return out;
}

}  // namespace renoise
