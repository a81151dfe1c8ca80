#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "renoise/latent.hpp"
#include "renoise/predictors.hpp"
#include "renoise/regularize.hpp"
#include "renoise/rng.hpp"
#include "renoise/sampler.hpp"
#include "renoise/schedule.hpp"

namespace renoise {

/// Averaging weights w_1..w_{K+1} for the timesteps in [t_min, t_max].
struct WeightBand {
  double t_min = -std::numeric_limits<double>::infinity();
  double t_max = std::numeric_limits<double>::infinity();
  std::vector<double> weights;
};

/// Non-overlapping timestep bands, each carrying a convex weight vector.
class RenoiseWeights {
 public:
  RenoiseWeights() = default;

  explicit RenoiseWeights(std::vector<WeightBand> bands) : bands_(std::move(bands)) {
    std::sort(bands_.begin(), bands_.end(),
              [](const WeightBand& a, const WeightBand& b) { return a.t_min < b.t_min; });
    for (std::size_t i = 0; i < bands_.size(); ++i) {
      const WeightBand& b = bands_[i];
      if (!(b.t_min <= b.t_max)) throw Error("weight band has t_min > t_max");
      if (b.weights.empty()) throw Error("weight band has no weights");
      double sum = 0.0;
      for (double w : b.weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw Error("renoising weights must be finite and non-negative");
        sum += w;
      }
      if (std::abs(sum - 1.0) > 1e-12) throw Error("renoising weights in a band must sum to 1");
      if (i > 0 && !(bands_[i - 1].t_max < b.t_min)) throw Error("weight bands overlap");
    }
  }

  /// One band over every timestep.
  static RenoiseWeights uniform_band(std::vector<double> weights) {
    return RenoiseWeights({WeightBand{-std::numeric_limits<double>::infinity(),
                                      std::numeric_limits<double>::infinity(), std::move(weights)}});
  }

  /// All weight on the final estimate z^{(K+1)}.
  static RenoiseWeights last_estimate(std::size_t K) {
    std::vector<double> w(K + 1, 0.0);
    w.back() = 1.0;
    return uniform_band(std::move(w));
  }

  /// Uniform over the first 2 estimates for t <= threshold, uniform over the
  /// last 3 above it, with threshold = origin + fraction * (t_T - origin).
  /// Shorter series use every available estimate.
  static RenoiseWeights default_policy(const Schedule& sched, std::size_t K, double fraction = 0.25) {
    if (sched.size() == 0) throw Error("default weight policy needs a non-empty schedule");
    const std::size_t n = K + 1;
    std::vector<double> early(n, 0.0), late(n, 0.0);
    const std::size_t n_early = std::min<std::size_t>(2, n);
    const std::size_t n_late = std::min<std::size_t>(3, n);
    for (std::size_t k = 0; k < n_early; ++k) early[k] = 1.0 / static_cast<double>(n_early);
    for (std::size_t k = n - n_late; k < n; ++k) late[k] = 1.0 / static_cast<double>(n_late);
    const double threshold = sched.origin + fraction * (sched.timesteps.back() - sched.origin);
    const double inf = std::numeric_limits<double>::infinity();
    return RenoiseWeights({WeightBand{-inf, threshold, std::move(early)},
                           WeightBand{std::nextafter(threshold, inf), inf, std::move(late)}});
  }

  bool empty() const noexcept { return bands_.empty(); }
  const std::vector<WeightBand>& bands() const noexcept { return bands_; }

  const std::vector<double>& for_time(double t) const {
    for (const auto& b : bands_)
      if (t >= b.t_min && t <= b.t_max) return b.weights;
    throw Error("uncovered timestep " + std::to_string(t) + " in renoising weight bands");
  }

 private:
  std::vector<WeightBand> bands_;
};

/// Fits a band's weight vector to K+1 estimates: longer vectors are truncated,
/// shorter ones zero-padded, and the result renormalized to sum to 1.
inline std::vector<double> resolve_weights(std::span<const double> w, std::size_t K) {
  std::vector<double> out(K + 1, 0.0);
  std::copy_n(w.begin(), std::min(w.size(), out.size()), out.begin());
  double sum = 0.0;
  for (double v : out) sum += v;
  if (!(sum > 0.0)) throw Error("renoising weights vanish after truncation to K+1 = " + std::to_string(K + 1));
  if (sum != 1.0)
    for (double& v : out) v /= sum;
  return out;
}

enum class NoiseCorrectionMode { off, exact, optimize };

struct NoiseCorrection {
  NoiseCorrectionMode mode = NoiseCorrectionMode::off;
  double eta = 1.0;
  std::size_t iters = 1;
};

/// Time used for the first predictor query of a step. `step` evaluates at the
/// step's own timestep (plain sampler reversing); `source` evaluates at the
/// time of z_{t-1}, which turns the first estimate into a forward-Euler step.
enum class FirstEstimateTime { step, source };

struct RenoiseConfig {
  std::size_t K = 0;
  std::optional<RenoiseWeights> weights;  // unset: RenoiseWeights::default_policy
  std::optional<EditLossConfig> edit_loss;
  NoiseCorrection noise_correction;
  FirstEstimateTime first_estimate = FirstEstimateTime::step;
  double band_fraction = 0.25;
  std::size_t max_estimate_history = std::numeric_limits<std::size_t>::max();

  void validate(const Schedule& sched) const {
    if (edit_loss) edit_loss->validate();
    if (noise_correction.mode != NoiseCorrectionMode::off) {
      if (sched.deterministic())
        throw Error("noise correction requires a schedule with rho > 0 on some step");
      if (noise_correction.mode == NoiseCorrectionMode::optimize &&
          !(noise_correction.eta > 0.0 && noise_correction.eta <= 1.0))
        throw Error("noise correction eta must lie in (0, 1]");
    }
    if (!(band_fraction >= 0.0 && band_fraction <= 1.0)) throw Error("band_fraction must lie in [0, 1]");
  }
};

/// The renoising estimates z^{(1)}..z^{(K+1)} of one inversion step and the
/// predictor outputs that produced them.
struct EstimateSeries {
  std::vector<Latent> estimates;  // most recent max_estimate_history entries
  std::vector<Latent> deltas;     // aligned with estimates
  std::vector<double> diff_norms; // ||z^{(k+1)} - z^{(k)}||_2, k = 1..K, never truncated
  std::size_t first_index = 1;    // k of estimates.front()
};

struct StepOutcome {
  Latent z;
  EstimateSeries series;
  std::vector<double> weights;
  bool diverged = false;
  std::size_t evaluations = 0;
};

/// True once the consecutive-difference norms grew three times in a row.
inline bool detect_divergence(std::span<const double> diff_norms) {
  int run = 0;
  for (std::size_t k = 1; k < diff_norms.size(); ++k) {
    run = diff_norms[k] > diff_norms[k - 1] ? run + 1 : 0;
    if (run >= 3) return true;
  }
  return false;
}

struct StepExtras {
  std::optional<double> source_time;       // required for FirstEstimateTime::source
  const Latent* reference_delta = nullptr; // patch-KL reference noise map
};

/// One inversion step with K renoising iterations:
///   z^{(0)} = z_prev,  z^{(k+1)} = InverseStep(z_prev, eps_theta(z^{(k)}, t)),
/// returning the weighted average of z^{(1)}..z^{(K+1)}. The edit loss is
/// applied to a prediction only when its estimate carries positive weight.
template <NoisePredictor P>
StepOutcome renoise_step(const Latent& z_prev, double t, const P& predictor, const StepParams& p,
                         const std::optional<Latent>& eps, const RenoiseConfig& cfg, const Conditioning& c,
                         const StepExtras& extras = {}) {
  if (!cfg.weights) throw Error("uncovered timestep " + std::to_string(t) + ": no renoising weights configured");
  const std::size_t K = cfg.K;
  StepOutcome out;
  out.weights = resolve_weights(cfg.weights->for_time(t), K);
  const bool edit = cfg.edit_loss && cfg.edit_loss->active();
  const std::size_t history = std::max<std::size_t>(cfg.max_estimate_history, 1);

  std::optional<Latent> average;
  Latent current = z_prev;
  for (std::size_t k = 0; k <= K; ++k) {
    double query_time = t;
    if (k == 0 && cfg.first_estimate == FirstEstimateTime::source) {
      if (!extras.source_time) throw Error("renoise_step: source-time first estimate needs a source time");
      query_time = *extras.source_time;
    }
    Latent delta = predictor.evaluate(current, query_time, c);
    ++out.evaluations;
    if (edit && out.weights[k] > 0.0) delta = enhance_edit(delta, *cfg.edit_loss, extras.reference_delta);

    Latent next = inverse_step(z_prev, delta, eps, p);
    if (!all_finite(next)) throw Error("renoise_step: non-finite estimate at iteration " + std::to_string(k + 1));
    if (k > 0) out.series.diff_norms.push_back(distance(next, current));

    const double w = out.weights[k];
    if (w > 0.0) {
      if (!average) {
        average = w == 1.0 ? next : w * next;
      } else {
        average->add_scaled(w, next);
      }
    }

    if (out.series.estimates.size() == history) {
      out.series.estimates.erase(out.series.estimates.begin());
      out.series.deltas.erase(out.series.deltas.begin());
      ++out.series.first_index;
    }
    out.series.estimates.push_back(next);
    out.series.deltas.push_back(std::move(delta));
    current = std::move(next);
  }

  out.diverged = detect_divergence(out.series.diff_norms);
  out.z = out.diverged ? std::move(current) : std::move(*average);
  return out;
}

/// Predictor evaluations spent by an inversion, by purpose.
struct OpCount {
  std::size_t renoise = 0;     // sum over steps of K + 1
  std::size_t reference = 0;   // patch-KL reference maps
  std::size_t correction = 0;  // noise correction
  std::size_t total() const noexcept { return renoise + reference + correction; }
};

struct InversionResult {
  Latent zT;
  std::vector<Latent> latents;  // z_0..z_T
  NoiseList noises;             // final (possibly corrected) eps_t per step
  std::vector<EstimateSeries> series;
  std::vector<std::optional<NoiseRecord>> noise_records;
  std::vector<bool> diverged;
  RenoiseConfig config;  // with weights resolved
  OpCount ops;

  std::size_t op_count() const noexcept { return ops.total(); }
  Trajectory trajectory() const { return Trajectory{latents, noises}; }
};

// Stream layout of the inversion's RngState: step i draws its injected noise
// from fork(2i) and its patch-KL reference noise from fork(2i + 1), so each
// draw is reproducible independently of evaluation order.
inline Latent step_noise(const RngState& rng, std::size_t step, const Shape& shape) {
  RngState s = rng.fork(2 * static_cast<std::uint64_t>(step));
  return sample_gaussian(s, shape);
}

inline Latent reference_noise(const RngState& rng, std::size_t step, const Shape& shape) {
  RngState s = rng.fork(2 * static_cast<std::uint64_t>(step) + 1);
  return sample_gaussian(s, shape);
}

/// Full inversion z_0 -> z_T over the schedule.
template <NoisePredictor P>
InversionResult renoise_inversion(const Latent& z0, const P& predictor, const Schedule& sched,
                                  const RenoiseConfig& config, const RngState& rng, const Conditioning& c) {
  sched.validate();
  config.validate(sched);
  InversionResult res;
  res.config = config;
  if (!res.config.weights) res.config.weights = RenoiseWeights::default_policy(sched, config.K, config.band_fraction);
  const RenoiseConfig& cfg = res.config;

  const std::size_t T = sched.size();
  const bool needs_reference = cfg.edit_loss && cfg.edit_loss->lambda_patch_kl > 0.0;
  res.latents.reserve(T + 1);
  res.latents.push_back(z0);
  res.noises.assign(T, std::nullopt);
  res.noise_records.assign(T, std::nullopt);

  for (std::size_t i = 0; i < T; ++i) {
    const StepParams& p = sched.steps[i];
    const double t = sched.timesteps[i];
    const Latent& z_prev = res.latents.back();

    std::optional<Latent> eps;
    if (!p.deterministic()) eps = step_noise(rng, i, z0.shape());

    StepExtras extras;
    extras.source_time = sched.source_time(i);
    std::optional<Latent> reference;
    if (needs_reference) {
      const Latent noisy = forward_noise(z0, i, sched, reference_noise(rng, i, z0.shape()));
      reference = predictor.evaluate(noisy, t, c);
      ++res.ops.reference;
      extras.reference_delta = &*reference;
    }

    StepOutcome step = renoise_step(z_prev, t, predictor, p, eps, cfg, c, extras);
    res.ops.renoise += step.evaluations;
    if (!all_finite(step.z)) throw Error("renoise_inversion: non-finite latent at step " + std::to_string(i + 1));

    if (eps && cfg.noise_correction.mode != NoiseCorrectionMode::off) {
      const Latent delta = predictor.evaluate(step.z, t, c);
      ++res.ops.correction;
      const Latent target = noise_correction_exact(z_prev, step.z, delta, p);
      NoiseRecord rec;
      if (cfg.noise_correction.mode == NoiseCorrectionMode::exact) {
        rec = NoiseRecord{target, true, distance(*eps, target), 0.0};
      } else {
        rec = noise_correction_optimize(*eps, target, cfg.noise_correction.eta, cfg.noise_correction.iters);
      }
      eps = rec.eps;
      res.noise_records[i] = std::move(rec);
    }

    res.noises[i] = std::move(eps);
    res.diverged.push_back(step.diverged);
    res.series.push_back(std::move(step.series));
    res.latents.push_back(std::move(step.z));
  }
  res.zT = res.latents.back();
  return res;
}

}  // namespace renoise
