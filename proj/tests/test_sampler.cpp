#include <gtest/gtest.h>

#include <cmath>

#include "renoise/predictors.hpp"
#include "renoise/renoise.hpp"
#include "renoise/sampler.hpp"

using namespace renoise;

namespace {
Latent vec(std::vector<double> v) {
  const std::size_t n = v.size();
  return Latent({n}, std::move(v));
}
}  // namespace

TEST(DenoiseStep, DirectFormula) {
  const Latent out = denoise_step(vec({1, 2}), vec({0.5, -0.5}), std::nullopt, {0.9, 0.1, 0.0});
  EXPECT_NEAR(out[0], 0.95, 1e-15);
  EXPECT_NEAR(out[1], 1.75, 1e-15);
}

TEST(DenoiseStep, IdentityStep) {
  const Latent z = vec({0.1, -3.0, 7.25});
  EXPECT_EQ(denoise_step(z, vec({9, 9, 9}), std::nullopt, {1.0, 0.0, 0.0}), z);
}

TEST(DenoiseStep, InjectedNoise) {
  const Latent out = denoise_step(vec({0}), vec({0}), vec({1}), {1.0, 0.2, 0.1});
  EXPECT_NEAR(out[0], 0.1, 1e-16);
}

TEST(DenoiseStep, MissingNoiseOnStochasticStepThrows) {
  EXPECT_THROW(denoise_step(vec({0}), vec({0}), std::nullopt, {1.0, 0.2, 0.1}), Error);
  EXPECT_THROW(denoise_step(vec({0, 1}), vec({0}), std::nullopt, {1.0, 0.2, 0.0}), Error);
}

TEST(InverseStep, UndoesDenoiseExample) {
  const Latent out = inverse_step(vec({0.95, 1.75}), vec({0.5, -0.5}), std::nullopt, {0.9, 0.1, 0.0});
  EXPECT_NEAR(out[0], 1.0, 1e-15);
  EXPECT_NEAR(out[1], 2.0, 1e-15);
}

TEST(InverseStep, HalvesWithoutPrediction) {
  const Latent z = vec({3, -5});
  const Latent out = inverse_step(z, vec({0, 0}), std::nullopt, {2.0, 0.7, 0.0});
  EXPECT_EQ(out.values(), (std::vector<double>{1.5, -2.5}));
}

TEST(InverseStep, ZeroPhiRejected) {
  EXPECT_THROW(inverse_step(vec({1}), vec({0}), std::nullopt, {0.0, 1.0, 0.0}), Error);
}

TEST(InverseStep, RoundTripProperty) {
  RngState rng{21, 0};
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * rng.next_unit(); };
  for (int n = 0; n < 200; ++n) {
    const StepParams p{uniform(0.3, 3.0) * (n % 2 ? 1 : -1), uniform(-2, 2), n % 3 ? uniform(0, 1) : 0.0};
    const Latent z = sample_gaussian(rng, {9});
    const Latent d = sample_gaussian(rng, {9});
    const Latent e = sample_gaussian(rng, {9});
    const Latent back = denoise_step(inverse_step(z, d, e, p), d, e, p);
    ASSERT_LE(max_abs_diff(back, z), 1e-14 * (1.0 + max_abs(z) + max_abs(d) + max_abs(e)));
  }
}

TEST(ApproxInverseStep, ToyForwardEuler) {
  const ToyShiftedGaussian toy(1.0);
  const Schedule s = build_euler_ode_schedule(0.0, std::vector<double>{0.1});
  const Latent out = approx_inverse_step(vec({2.0}), toy, 0.0, {}, std::nullopt, s.steps[0]);
  EXPECT_NEAR(out[0], 1.9, 1e-15);
}

TEST(ApproxInverseStep, ZeroPredictorKeepsLatent) {
  const LinearPredictor zero(Matrix::diagonal({0, 0, 0}));
  const Latent z = vec({1, -2, 3});
  EXPECT_EQ(approx_inverse_step(z, zero, 0.0, {}, std::nullopt, {1.0, 0.37, 0.0}), z);
}

TEST(ApproxInverseStep, ScalarLinear) {
  const LinearPredictor lin(Matrix::from_rows({{0.5}}));
  EXPECT_EQ(approx_inverse_step(vec({1}), lin, 0.0, {}, std::nullopt, {1.0, 0.5, 0.0})[0], 0.75);
}

TEST(ForwardNoise, Examples) {
  Schedule s;
  s.timesteps = {1.0};
  s.steps = {StepParams{}};
  s.alpha = {0.8};
  s.sigma = {0.6};
  EXPECT_NEAR(forward_noise(vec({1}), 0, s, vec({1}))[0], 1.4, 1e-15);
  s.sigma = {0.0};
  const Latent z0 = vec({0.3, 0.7});
  Latent expect = z0;
  expect *= 0.8;
  EXPECT_EQ(forward_noise(z0, 0, s, vec({5, 5})), expect);
  s.alpha = {1.0};
  EXPECT_EQ(forward_noise(z0, 0, s, vec({5, 5})), z0);
  EXPECT_THROW(forward_noise(z0, 1, s, vec({5, 5})), Error);
}

TEST(DenoiseTrajectory, ToyExactPreimage) {
  const ToyShiftedGaussian toy(1.0);
  const Schedule s = build_euler_ode_schedule(0.0, std::vector<double>{0.1});
  // z_t from the exact inverse: 2 - 0.1 e^{-0.1}.
  const Latent zt = vec({2.0 - 0.1 * std::exp(-0.1)});
  const Trajectory traj = denoise_trajectory(zt, {}, toy, s, {});
  EXPECT_NEAR(traj.latents[0][0], 2.0, 1e-12);
  EXPECT_EQ(traj.latents[1], zt);
}

TEST(DenoiseTrajectory, ZeroPredictorIdentitySteps) {
  const LinearPredictor zero(Matrix::diagonal({0, 0}));
  Schedule s;
  s.timesteps = {1, 2, 3};
  s.steps.assign(3, StepParams{1.0, 0.4, 0.0});
  s.alpha.assign(3, 1.0);
  s.sigma.assign(3, 0.0);
  const Latent zT = vec({0.5, -1.5});
  const Trajectory traj = denoise_trajectory(zT, {}, zero, s, {});
  for (const Latent& z : traj.latents) EXPECT_EQ(z, zT);
}

TEST(DenoiseTrajectory, LinearFixedPointMapsBack) {
  const LinearPredictor lin(Matrix::from_rows({{0.5}}));
  Schedule s;
  s.timesteps = {1};
  s.steps = {StepParams{1.0, 0.5, 0.0}};
  s.alpha = {1};
  s.sigma = {0};
  EXPECT_NEAR(denoise_trajectory(vec({0.8}), {}, lin, s, {}).latents[0][0], 1.0, 1e-15);
}

TEST(DenoiseTrajectory, NoiseListLengthChecked) {
  const LinearPredictor lin(Matrix::from_rows({{0.5}}));
  const Schedule s = build_ancestral_schedule(log_linear_alpha_bar(3, 0.2));
  EXPECT_THROW(denoise_trajectory(vec({1}), NoiseList(2), lin, s, {}), Error);
  // Stochastic steps without noise are an error, not a silent zero.
  EXPECT_THROW(denoise_trajectory(vec({1}), {}, lin, s, {}), Error);
}

TEST(DenoiseTrajectory, NonFiniteStateRaises) {
  const LinearPredictor huge(Matrix::from_rows({{1e300}}));
  const Schedule s = build_ddim_schedule(std::vector<double>{0.5, 0.25});
  EXPECT_THROW(denoise_trajectory(vec({1e300}), {}, huge, s, {}), Error);
}
