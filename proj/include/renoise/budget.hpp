#pragma once

#include <algorithm>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "renoise/diagnostics.hpp"
#include "renoise/renoise.hpp"
#include "renoise/sampler.hpp"

namespace renoise {

/// One point of an equal-cost comparison: how many inversion steps, how many
/// denoising steps, and how many renoising iterations per inversion step.
struct BudgetRow {
  std::size_t inversion_steps = 0;
  std::size_t denoise_steps = 0;
  std::size_t K = 0;
  friend bool operator==(const BudgetRow&, const BudgetRow&) = default;

  /// Predictor evaluations of a plain run (no edit reference, no correction).
  std::size_t nominal_ops() const noexcept { return inversion_steps * (K + 1) + denoise_steps; }
};

struct BudgetResult {
  BudgetRow row;
  std::size_t inversion_ops = 0;
  std::size_t op_count = 0;  // inversion + denoising evaluations, as counted
  ReconstructionMetrics metrics;
};

/// Builds the schedule of a family for a given number of steps.
using ScheduleFamily = std::function<Schedule(std::size_t steps)>;

/// Removes repeated rows, keeping first occurrences in order. Returns the
/// unique rows and the number of duplicates dropped.
inline std::pair<std::vector<BudgetRow>, std::size_t> dedupe_budget_rows(std::span<const BudgetRow> rows) {
  std::vector<BudgetRow> unique;
  std::size_t dropped = 0;
  for (const BudgetRow& r : rows) {
    if (std::find(unique.begin(), unique.end(), r) != unique.end()) {
      ++dropped;
    } else {
      unique.push_back(r);
    }
  }
  return {std::move(unique), dropped};
}

/// Invert with one row's settings, denoise, and measure the reconstruction.
/// When the inversion and denoising step counts differ on a stochastic
/// family, denoising draws fresh noise from a dedicated fork of `rng`.
template <NoisePredictor P>
BudgetResult run_budget_row(const Latent& z0, const P& predictor, const ScheduleFamily& family, const BudgetRow& row,
                            const RenoiseConfig& base, const RngState& rng, const Conditioning& c, double peak = 1.0) {
  if (row.inversion_steps == 0 || row.denoise_steps == 0) throw Error("budget row needs positive step counts");
  CountingPredictor<P> counted(predictor);
  const Schedule inv_sched = family(row.inversion_steps);
  RenoiseConfig cfg = base;
  cfg.K = row.K;
  InversionResult inv = renoise_inversion(z0, counted, inv_sched, cfg, rng, c);
  const std::size_t inversion_ops = counted.calls();

  NoiseList noises;
  const Schedule den_sched = row.denoise_steps == row.inversion_steps ? inv_sched : family(row.denoise_steps);
  if (row.denoise_steps == row.inversion_steps) {
    noises = inv.noises;
  } else if (!den_sched.deterministic()) {
    noises.assign(den_sched.size(), std::nullopt);
    for (std::size_t i = 0; i < den_sched.size(); ++i)
      if (!den_sched.steps[i].deterministic())
        noises[i] = step_noise(rng.fork(std::uint64_t{1} << 32), i, z0.shape());
  }
  const Trajectory traj = denoise_trajectory(inv.zT, noises, counted, den_sched, c);
  return BudgetResult{row, inversion_ops, counted.calls(), reconstruction_metrics(z0, traj.latents.front(), peak)};
}

/// Runs every row in order. Rows with explicit weights in `base` keep them
/// (resolved against each row's K); otherwise the default policy applies.
template <NoisePredictor P>
std::vector<BudgetResult> operation_budget_sweep(const Latent& z0, const P& predictor, const ScheduleFamily& family,
                                                 std::span<const BudgetRow> rows, const RenoiseConfig& base,
                                                 const RngState& rng, const Conditioning& c, double peak = 1.0) {
  std::vector<BudgetResult> out;
  out.reserve(rows.size());
  for (const BudgetRow& row : rows) out.push_back(run_budget_row(z0, predictor, family, row, base, rng, c, peak));
  return out;
}

}  // namespace renoise
