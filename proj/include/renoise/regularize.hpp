#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "renoise/latent.hpp"
#include "renoise/schedule.hpp"

namespace renoise {

/// Circular spatial offset (rows, columns) used by the pair-correlation loss.
struct Shift {
  int dy = 0;
  int dx = 0;
  friend bool operator==(const Shift&, const Shift&) = default;
};

struct EditLossConfig {
  double lambda_pair = 10.0;
  double lambda_patch_kl = 0.055;
  std::size_t patch_size = 4;
  std::vector<Shift> shifts{{1, 0}, {0, 1}};
  // Gradient step of Enhance-edit; unset means 0.1 / (lambda_pair + lambda_patch_kl + 1).
  std::optional<double> step_size;

  double effective_step() const { return step_size.value_or(0.1 / (lambda_pair + lambda_patch_kl + 1.0)); }
  bool active() const noexcept { return lambda_pair > 0.0 || lambda_patch_kl > 0.0; }

  void validate() const {
    if (!(lambda_pair >= 0.0) || !(lambda_patch_kl >= 0.0))
      throw Error("edit loss weights must be non-negative");
    if (patch_size == 0) throw Error("edit patch_size must be positive");
    if (step_size && !(*step_size > 0.0)) throw Error("edit step_size must be positive");
  }
};

struct LossResult {
  double loss = 0.0;
  Latent gradient;
  bool variance_floored = false;
};

namespace detail {

// The last two dimensions are spatial (H, W); leading dimensions are channels.
struct SpatialLayout {
  std::size_t channels, height, width;
};

inline SpatialLayout spatial_layout(const Latent& x, const char* what) {
  if (x.rank() < 2) throw Error(std::string(what) + ": needs at least two spatial dimensions");
  const auto& s = x.shape();
  const std::size_t h = s[s.size() - 2];
  const std::size_t w = s[s.size() - 1];
  return {x.size() / (h * w), h, w};
}

inline std::size_t wrap(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

}  // namespace detail

/// Sum over channels and shifts of the squared normalized circular
/// autocorrelation  a_s = <x, roll(x, s)> / <x, x>.
inline LossResult loss_pair(const Latent& delta, const std::vector<Shift>& shifts) {
  const auto [channels, h, w] = detail::spatial_layout(delta, "loss_pair");
  LossResult out{0.0, Latent::zeros_like(delta)};
  const std::size_t plane = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* x = delta.data().data() + c * plane;
    double* g = out.gradient.data().data() + c * plane;
    double energy = 0.0;
    for (std::size_t i = 0; i < plane; ++i) energy += x[i] * x[i];
    if (energy == 0.0) continue;
    for (const Shift& s : shifts) {
      auto at = [&](std::size_t y, std::size_t xi, int sy, int sx) {
        return x[detail::wrap(static_cast<std::ptrdiff_t>(y) + sy, h) * w +
                 detail::wrap(static_cast<std::ptrdiff_t>(xi) + sx, w)];
      };
      double cross = 0.0;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xi = 0; xi < w; ++xi) cross += x[y * w + xi] * at(y, xi, s.dy, s.dx);
      const double a = cross / energy;
      out.loss += a * a;
      // d a / d x_q = (x_{q+s} + x_{q-s}) / E - 2 a x_q / E
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xi = 0; xi < w; ++xi) {
          const std::size_t q = y * w + xi;
          const double da = (at(y, xi, s.dy, s.dx) + at(y, xi, -s.dy, -s.dx) - 2.0 * a * x[q]) / energy;
          g[q] += 2.0 * a * da;
        }
    }
  }
  return out;
}

inline constexpr double kVarianceFloor = 1e-8;

/// Mean over non-overlapping patch_size x patch_size patches (per channel) of
/// KL( N(mu_delta, var_delta) || N(mu_ref, var_ref) ). Partial patches at the
/// right/bottom edges are dropped. Variances below 1e-8 are floored.
inline LossResult loss_patch_kl(const Latent& delta, const Latent& reference, std::size_t patch_size) {
  delta.require_same_shape(reference, "loss_patch_kl");
  if (patch_size == 0) throw Error("loss_patch_kl: patch_size must be positive");
  const auto [channels, h, w] = detail::spatial_layout(delta, "loss_patch_kl");
  const std::size_t rows = h / patch_size;
  const std::size_t cols = w / patch_size;
  if (rows == 0 || cols == 0) throw Error("loss_patch_kl: patch larger than the spatial extent");
  const std::size_t patches = channels * rows * cols;
  const double count = static_cast<double>(patch_size * patch_size);
  LossResult out{0.0, Latent::zeros_like(delta)};
  const std::size_t plane = h * w;

  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t pr = 0; pr < rows; ++pr)
      for (std::size_t pc = 0; pc < cols; ++pc) {
        auto index = [&](std::size_t i, std::size_t j) {
          return c * plane + (pr * patch_size + i) * w + pc * patch_size + j;
        };
        double mu1 = 0.0, mu0 = 0.0;
        for (std::size_t i = 0; i < patch_size; ++i)
          for (std::size_t j = 0; j < patch_size; ++j) {
            mu1 += delta[index(i, j)];
            mu0 += reference[index(i, j)];
          }
        mu1 /= count;
        mu0 /= count;
        double v1 = 0.0, v0 = 0.0;
        for (std::size_t i = 0; i < patch_size; ++i)
          for (std::size_t j = 0; j < patch_size; ++j) {
            const double d1 = delta[index(i, j)] - mu1;
            const double d0 = reference[index(i, j)] - mu0;
            v1 += d1 * d1;
            v0 += d0 * d0;
          }
        v1 /= count;
        v0 /= count;
        bool floored1 = false;
        if (v0 < kVarianceFloor) {
          v0 = kVarianceFloor;
          out.variance_floored = true;
        }
        if (v1 < kVarianceFloor) {
          v1 = kVarianceFloor;
          floored1 = true;
          out.variance_floored = true;
        }
        const double dmu = mu1 - mu0;
        out.loss += 0.5 * (std::log(v0 / v1) + (v1 + dmu * dmu) / v0 - 1.0);

        // dKL/dx_i = [dmu / v0 + (1/v0 - 1/v1) (x_i - mu1)] / count
        const double var_coeff = floored1 ? 0.0 : (1.0 / v0 - 1.0 / v1);
        for (std::size_t i = 0; i < patch_size; ++i)
          for (std::size_t j = 0; j < patch_size; ++j) {
            const std::size_t q = index(i, j);
            out.gradient[q] = (dmu / v0 + var_coeff * (delta[q] - mu1)) / count;
          }
      }
  const double inv = 1.0 / static_cast<double>(patches);
  out.loss *= inv;
  out.gradient *= inv;
  return out;
}

/// lambda_pair * L_pair + lambda_patch_kl * L_patch_kl. `reference` is only
/// consulted when lambda_patch_kl > 0.
inline LossResult edit_loss(const Latent& delta, const EditLossConfig& cfg, const Latent* reference) {
  LossResult out{0.0, Latent::zeros_like(delta)};
  if (cfg.lambda_pair > 0.0) {
    LossResult pair = loss_pair(delta, cfg.shifts);
    out.loss += cfg.lambda_pair * pair.loss;
    out.gradient.add_scaled(cfg.lambda_pair, pair.gradient);
  }
  if (cfg.lambda_patch_kl > 0.0) {
    if (!reference) throw Error("edit_loss: patch-KL term needs a reference noise map");
    LossResult kl = loss_patch_kl(delta, *reference, cfg.patch_size);
    out.loss += cfg.lambda_patch_kl * kl.loss;
    out.gradient.add_scaled(cfg.lambda_patch_kl, kl.gradient);
    out.variance_floored = kl.variance_floored;
  }
  return out;
}

/// One gradient-descent step on the predicted noise map.
inline Latent enhance_edit(const Latent& delta, const EditLossConfig& cfg, const Latent* reference = nullptr) {
  if (!cfg.active()) return delta;
  LossResult l = edit_loss(delta, cfg, reference);
  Latent out = delta;
  out.add_scaled(-cfg.effective_step(), l.gradient);
  return out;
}

// ---------------------------------------------------------------------------
// Noise correction for stochastic samplers.

/// The injected noise that makes denoise_step(z_t, delta, eps, p) land on z_prev:
/// eps = (z_prev - phi z_t - psi delta) / rho.
inline Latent noise_correction_exact(const Latent& z_prev, const Latent& z_t, const Latent& delta_at_zt,
                                     const StepParams& p) {
  if (!(p.rho > 0.0)) throw Error("noise_correction_exact: requires rho > 0");
  z_prev.require_same_shape(z_t, "noise_correction_exact");
  z_prev.require_same_shape(delta_at_zt, "noise_correction_exact");
  Latent eps = z_prev;
  for (std::size_t i = 0; i < eps.size(); ++i)
    eps[i] = (z_prev[i] - p.phi * z_t[i] - p.psi * delta_at_zt[i]) / p.rho;
  return eps;
}

struct NoiseRecord {
  Latent eps;
  bool corrected = false;
  double residual_before = 0.0;  // ||eps_initial - target||_2
  double residual_after = 0.0;   // ||eps_final - target||_2
};

/// Relaxes eps toward the exact-correction target: iters steps of gradient
/// descent on 0.5 ||eps - target||^2 with step eta, so that
/// eps_final = target + (1 - eta)^iters (eps_0 - target).
inline NoiseRecord noise_correction_optimize(const Latent& eps0, const Latent& target, double eta,
                                             std::size_t iters) {
  if (!(eta > 0.0 && eta <= 1.0)) throw Error("noise correction eta must lie in (0, 1]");
  eps0.require_same_shape(target, "noise_correction_optimize");
  NoiseRecord rec{eps0, iters > 0, distance(eps0, target), 0.0};
  for (std::size_t k = 0; k < iters; ++k) {
    if (eta == 1.0) {
      rec.eps = target;
      break;
    }
    for (std::size_t i = 0; i < rec.eps.size(); ++i) rec.eps[i] += eta * (target[i] - rec.eps[i]);
  }
  rec.residual_after = distance(rec.eps, target);
  return rec;
}

}  // namespace renoise
