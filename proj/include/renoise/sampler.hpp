#pragma once

#include <optional>
#include <vector>

#include "renoise/latent.hpp"
#include "renoise/predictors.hpp"
#include "renoise/schedule.hpp"

namespace renoise {

/// Injected noise per step; std::nullopt where the step is deterministic.
using NoiseList = std::vector<std::optional<Latent>>;

/// z_0 ... z_T plus the noise consumed by each step.
struct Trajectory {
  std::vector<Latent> latents;  // size T+1, latents[i] = z_i
  NoiseList noises;             // size T, noises[i] belongs to step i (z_{i+1} -> z_i)
};

namespace detail {

inline const Latent* noise_for(const std::optional<Latent>& eps, const StepParams& p,
                               const Latent& like, const char* what) {
  if (p.deterministic()) return nullptr;
  if (!eps) throw Error(std::string(what) + ": step with rho > 0 requires injected noise");
  like.require_same_shape(*eps, what);
  return &*eps;
}

}  // namespace detail

/// One sampler step: phi * z_t + psi * delta + rho * eps.
inline Latent denoise_step(const Latent& z_t, const Latent& delta, const std::optional<Latent>& eps,
                           const StepParams& p) {
  z_t.require_same_shape(delta, "denoise_step");
  const Latent* noise = detail::noise_for(eps, p, z_t, "denoise_step");
  Latent out = z_t;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = p.phi * z_t[i] + p.psi * delta[i];
    if (noise) v += p.rho * (*noise)[i];
    out[i] = v;
  }
  return out;
}

/// Algebraic inverse of denoise_step for a fixed delta and eps:
/// (z_prev - psi * delta - rho * eps) / phi.
inline Latent inverse_step(const Latent& z_prev, const Latent& delta, const std::optional<Latent>& eps,
                           const StepParams& p) {
  if (p.phi == 0.0) throw Error("inverse_step: phi must be nonzero");
  z_prev.require_same_shape(delta, "inverse_step");
  const Latent* noise = detail::noise_for(eps, p, z_prev, "inverse_step");
  Latent out = z_prev;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = z_prev[i] - p.psi * delta[i];
    if (noise) v -= p.rho * (*noise)[i];
    out[i] = v / p.phi;
  }
  return out;
}

/// First-order inversion: the predictor is queried at z_prev instead of the
/// unknown z_t. This is plain sampler reversing (e.g. DDIM inversion).
template <NoisePredictor P>
Latent approx_inverse_step(const Latent& z_prev, const P& predictor, double t, const Conditioning& c,
                           const std::optional<Latent>& eps, const StepParams& p) {
  return inverse_step(z_prev, predictor.evaluate(z_prev, t, c), eps, p);
}

/// alpha_i * z0 + sigma_i * eps for noise level `step` of the schedule.
inline Latent forward_noise(const Latent& z0, std::size_t step, const Schedule& sched, const Latent& eps) {
  z0.require_same_shape(eps, "forward_noise");
  if (step >= sched.size()) throw Error("forward_noise: step index out of range");
  Latent out = z0;
  out *= sched.alpha[step];
  if (sched.sigma[step] != 0.0) out.add_scaled(sched.sigma[step], eps);
  return out;
}

/// Runs the sampler from z_T down to z_0. Steps with rho = 0 ignore `noises`.
template <NoisePredictor P>
Trajectory denoise_trajectory(const Latent& zT, const NoiseList& noises, const P& predictor,
                              const Schedule& sched, const Conditioning& c) {
  const std::size_t T = sched.size();
  if (T == 0) throw Error("denoise_trajectory: empty schedule");
  if (!noises.empty() && noises.size() != T)
    throw Error("denoise_trajectory: expected " + std::to_string(T) + " noises");
  Trajectory traj;
  traj.latents.assign(T + 1, Latent{});
  traj.noises.assign(T, std::nullopt);
  traj.latents[T] = zT;
  static const std::optional<Latent> kNone;
  for (std::size_t i = T; i-- > 0;) {
    const StepParams& p = sched.steps[i];
    const std::optional<Latent>& eps = noises.empty() ? kNone : noises[i];
    if (!p.deterministic()) traj.noises[i] = eps;
    const Latent& z = traj.latents[i + 1];
    traj.latents[i] = denoise_step(z, predictor.evaluate(z, sched.timesteps[i], c), eps, p);
    if (!all_finite(traj.latents[i]))
      throw Error("denoise_trajectory: non-finite latent at step " + std::to_string(i));
  }
  return traj;
}

}  // namespace renoise
