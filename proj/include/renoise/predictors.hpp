#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "renoise/latent.hpp"
#include "renoise/rng.hpp"

namespace renoise {

/// Opaque conditioning tag (the text condition c). Never inspected by the engine.
struct Conditioning {
  std::string tag;
  friend bool operator==(const Conditioning&, const Conditioning&) = default;
};

/// eps_theta(z, t, c): deterministic, shape-preserving.
template <class P>
concept NoisePredictor = requires(const P& p, const Latent& z, double t, const Conditioning& c) {
  { p.evaluate(z, t, c) } -> std::convertible_to<Latent>;
};

/// Predictors exposing an exact Jacobian-vector product.
template <class P>
concept AnalyticJvp = NoisePredictor<P> &&
    requires(const P& p, const Latent& z, double t, const Conditioning& c, const Latent& v) {
  { p.jvp(z, t, c, v) } -> std::convertible_to<Latent>;
};

/// Predictors exposing an exact vector-Jacobian (adjoint) product.
template <class P>
concept AnalyticVjp = AnalyticJvp<P> &&
    requires(const P& p, const Latent& z, double t, const Conditioning& c, const Latent& u) {
  { p.vjp(z, t, c, u) } -> std::convertible_to<Latent>;
};

// ---------------------------------------------------------------------------

/// Probability-flow field of a diffused shifted Gaussian N(a e^{-t}, I):
/// eps(z, t) = -a e^{-t}, independent of z.
class ToyShiftedGaussian {
 public:
  explicit ToyShiftedGaussian(double a) : a_(a) {
    if (a == 0.0 || !std::isfinite(a)) throw Error("toy predictor shift a must be finite and nonzero");
  }

  double shift() const noexcept { return a_; }

  Latent evaluate(const Latent& z, double t, const Conditioning& = {}) const {
    return Latent(z.shape(), -a_ * std::exp(-t));
  }

  Latent jvp(const Latent& z, double, const Conditioning&, const Latent& v) const {
    z.require_same_shape(v, "toy jvp");
    return Latent::zeros_like(z);
  }

  Latent vjp(const Latent& z, double, const Conditioning&, const Latent& u) const {
    z.require_same_shape(u, "toy vjp");
    return Latent::zeros_like(z);
  }

 private:
  double a_;
};

/// Dense square matrix acting on the flattened latent.
struct Matrix {
  std::size_t n = 0;
  std::vector<double> entries;  // row-major n*n

  double operator()(std::size_t r, std::size_t c) const { return entries[r * n + c]; }
  double& operator()(std::size_t r, std::size_t c) { return entries[r * n + c]; }

  static Matrix identity(std::size_t n) {
    Matrix m{n, std::vector<double>(n * n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix diagonal(const std::vector<double>& d) {
    Matrix m{d.size(), std::vector<double>(d.size() * d.size(), 0.0)};
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m{rows.size(), {}};
    m.entries.reserve(m.n * m.n);
    for (const auto& r : rows) {
      if (r.size() != m.n) throw Error("matrix rows must form a square matrix");
      m.entries.insert(m.entries.end(), r.begin(), r.end());
    }
    return m;
  }

  Matrix transposed() const {
    Matrix t{n, std::vector<double>(n * n)};
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  friend Matrix operator*(const Matrix& a, const Matrix& b) {
    Matrix out{a.n, std::vector<double>(a.n * a.n, 0.0)};
    for (std::size_t r = 0; r < a.n; ++r)
      for (std::size_t k = 0; k < a.n; ++k) {
        const double x = a(r, k);
        for (std::size_t c = 0; c < a.n; ++c) out(r, c) += x * b(k, c);
      }
    return out;
  }
};

/// Orthogonal matrix from modified Gram-Schmidt on a seeded Gaussian matrix.
inline Matrix random_orthogonal(std::size_t n, std::uint64_t seed) {
  RngState rng{seed, 0};
  Latent g = sample_gaussian(rng, {n, n});
  Matrix q{n, g.values()};
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double proj = 0.0;
      for (std::size_t r = 0; r < n; ++r) proj += q(r, p) * q(r, c);
      for (std::size_t r = 0; r < n; ++r) q(r, c) -= proj * q(r, p);
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < n; ++r) norm += q(r, c) * q(r, c);
    norm = std::sqrt(norm);
    if (norm == 0.0) throw Error("random_orthogonal: rank deficient draw");
    for (std::size_t r = 0; r < n; ++r) q(r, c) /= norm;
  }
  return q;
}

/// U * diag(singular_values) * V^T with seeded orthogonal U, V.
inline Matrix matrix_with_singular_values(const std::vector<double>& singular_values, std::uint64_t seed) {
  const std::size_t n = singular_values.size();
  const Matrix u = random_orthogonal(n, mix64(seed ^ 0xA5A5A5A5ULL));
  const Matrix v = random_orthogonal(n, mix64(seed ^ 0x5A5A5A5AULL));
  return u * Matrix::diagonal(singular_values) * v.transposed();
}

/// eps(z) = M z. Its Jacobian is exactly M, so every fixed-point quantity of
/// the renoising map has a closed form.
class LinearPredictor {
 public:
  explicit LinearPredictor(Matrix m) : m_(std::move(m)) {
    if (m_.entries.size() != m_.n * m_.n) throw Error("linear predictor matrix is not square");
    for (double v : m_.entries)
      if (!std::isfinite(v)) throw Error("linear predictor matrix has non-finite entries");
  }

  const Matrix& matrix() const noexcept { return m_; }

  Latent evaluate(const Latent& z, double = 0.0, const Conditioning& = {}) const {
    return apply(m_, z, false);
  }

  Latent jvp(const Latent& z, double, const Conditioning&, const Latent& v) const {
    z.require_same_shape(v, "linear jvp");
    return apply(m_, v, false);
  }

  Latent vjp(const Latent& z, double, const Conditioning&, const Latent& u) const {
    z.require_same_shape(u, "linear vjp");
    return apply(m_, u, true);
  }

 private:
  static Latent apply(const Matrix& m, const Latent& x, bool transpose) {
    if (x.size() != m.n)
      throw Error("linear predictor dimension " + std::to_string(m.n) +
                  " does not match latent size " + std::to_string(x.size()));
    Latent out = Latent::zeros_like(x);
    for (std::size_t r = 0; r < m.n; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < m.n; ++c) s += (transpose ? m(c, r) : m(r, c)) * x[c];
      out[r] = s;
    }
    return out;
  }

  Matrix m_;
};

struct SeededNonlinearParams {
  std::uint64_t seed = 0;
  std::size_t width = 64;
  double scale = 1.0;  // input sharpness: larger means more curvature
  double gain = 0.25;  // output amplitude
};

/// Random-feature surrogate for a denoising network:
///   eps(z, t) = A tanh(B z + b0 + b1 cos(t)),
/// with A (n x width) ~ gain * N(0, 1/width), B (width x n) ~ scale * N(0, 1/n),
/// b0, b1 ~ N(0, 1). Smooth with Lipschitz constant at most ||A|| ||B||.
/// Only `evaluate` is provided; Jacobian products go through finite
/// differences like any black-box network would.
class SeededNonlinear {
 public:
  SeededNonlinear(SeededNonlinearParams params, std::size_t dim) : params_(params), dim_(dim) {
    if (dim == 0 || params.width == 0) throw Error("seeded nonlinear predictor needs positive sizes");
    if (!(params.scale > 0.0) || !std::isfinite(params.gain))
      throw Error("seeded nonlinear predictor scale must be positive");
    RngState rng{params.seed, 0};
    const double a_scale = params.gain / std::sqrt(static_cast<double>(params.width));
    const double b_scale = params.scale / std::sqrt(static_cast<double>(dim));
    a_ = sample_gaussian(rng, {dim, params.width}) * a_scale;
    b_ = sample_gaussian(rng, {params.width, dim}) * b_scale;
    bias0_ = sample_gaussian(rng, {params.width});
    bias1_ = sample_gaussian(rng, {params.width});
  }

  const SeededNonlinearParams& params() const noexcept { return params_; }
  std::size_t dim() const noexcept { return dim_; }

  Latent evaluate(const Latent& z, double t, const Conditioning& = {}) const {
    if (z.size() != dim_)
      throw Error("seeded nonlinear predictor built for dimension " + std::to_string(dim_) +
                  ", got latent of size " + std::to_string(z.size()));
    const std::size_t w = params_.width;
    const double g = std::cos(t);
    std::vector<double> hidden(w);
    for (std::size_t j = 0; j < w; ++j) {
      double s = bias0_[j] + bias1_[j] * g;
      for (std::size_t i = 0; i < dim_; ++i) s += b_[j * dim_ + i] * z[i];
      hidden[j] = std::tanh(s);
    }
    Latent out = Latent::zeros_like(z);
    for (std::size_t i = 0; i < dim_; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < w; ++j) s += a_[i * w + j] * hidden[j];
      out[i] = s;
    }
    return out;
  }

  // Read-only access to the weights (tests build analytic Jacobians from them).
  const Latent& output_weights() const noexcept { return a_; }
  const Latent& input_weights() const noexcept { return b_; }
  const Latent& bias() const noexcept { return bias0_; }
  const Latent& time_bias() const noexcept { return bias1_; }

 private:
  SeededNonlinearParams params_;
  std::size_t dim_;
  Latent a_, b_, bias0_, bias1_;
};

/// Wraps a predictor and counts evaluate() calls.
template <NoisePredictor P>
class CountingPredictor {
 public:
  explicit CountingPredictor(const P& inner) : inner_(&inner) {}

  Latent evaluate(const Latent& z, double t, const Conditioning& c) const {
    ++calls_;
    return inner_->evaluate(z, t, c);
  }

  std::size_t calls() const noexcept { return calls_; }
  void reset() noexcept { calls_ = 0; }

 private:
  const P* inner_;
  mutable std::size_t calls_ = 0;
};

inline double default_fd_epsilon(const Latent& z) { return 1e-5 * (1.0 + max_abs(z)); }

/// Jacobian-vector product d eps/dz |_z . v. Exact for predictors with an
/// analytic JVP, otherwise the central difference
/// (eps(z + h v) - eps(z - h v)) / (2h).
template <NoisePredictor P>
Latent predictor_jvp(const P& predictor, const Latent& z, double t, const Conditioning& c,
                     const Latent& direction, std::optional<double> fd_epsilon = std::nullopt) {
  z.require_same_shape(direction, "predictor_jvp");
  Latent out;
  if constexpr (AnalyticJvp<P>) {
    out = predictor.jvp(z, t, c, direction);
  } else {
    const double h = fd_epsilon.value_or(default_fd_epsilon(z));
    if (!(h > 0.0)) throw Error("finite-difference epsilon must be positive");
    Latent plus = z;
    plus.add_scaled(h, direction);
    Latent minus = z;
    minus.add_scaled(-h, direction);
    out = predictor.evaluate(plus, t, c);
    out -= predictor.evaluate(minus, t, c);
    out *= 1.0 / (2.0 * h);
  }
  if (!all_finite(out)) throw Error("JVP overflow");
  return out;
}

}  // namespace renoise
