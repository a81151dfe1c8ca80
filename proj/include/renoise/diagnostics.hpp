#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "renoise/latent.hpp"
#include "renoise/predictors.hpp"
#include "renoise/renoise.hpp"
#include "renoise/rng.hpp"
#include "renoise/schedule.hpp"

namespace renoise {

/// ||z^{(k+1)} - z^{(k)}||_2 over the stored estimates.
inline std::vector<double> consecutive_diffs(const EstimateSeries& series) {
  std::vector<double> out;
  for (std::size_t k = 1; k < series.estimates.size(); ++k)
    out.push_back(distance(series.estimates[k], series.estimates[k - 1]));
  return out;
}

/// (|psi| / |phi|) * ||d eps / dz||_2 at z: the local contraction factor of
/// the renoising map.
///
/// The spectral norm comes from power iteration on the Gram operator
/// J^T J. Predictors with analytic JVP/VJP use them directly; black-box
/// predictors get their Jacobian assembled column by column from central
/// finite-difference JVPs, since no adjoint is available for them.
template <NoisePredictor P>
double scaled_jacobian_norm(const P& predictor, const Latent& z, double t, const Conditioning& c,
                            const StepParams& p, std::size_t power_iters, RngState& rng,
                            std::optional<double> fd_epsilon = std::nullopt) {
  if (power_iters == 0) throw Error("scaled_jacobian_norm: power_iters must be >= 1");
  if (p.phi == 0.0) throw Error("scaled_jacobian_norm: phi must be nonzero");
  const double scale = std::abs(p.psi) / std::abs(p.phi);

  std::optional<Matrix> jac;
  if constexpr (!AnalyticVjp<P>) {
    const std::size_t n = z.size();
    jac = Matrix{n, std::vector<double>(n * n)};
    Latent e = Latent::zeros_like(z);
    for (std::size_t col = 0; col < n; ++col) {
      e[col] = 1.0;
      const Latent column = predictor_jvp(predictor, z, t, c, e, fd_epsilon);
      e[col] = 0.0;
      for (std::size_t r = 0; r < n; ++r) (*jac)(r, col) = column[r];
    }
  }
  auto apply = [&](const Latent& v, bool transpose) {
    if constexpr (AnalyticVjp<P>) {
      return transpose ? predictor.vjp(z, t, c, v) : predictor.jvp(z, t, c, v);
    } else {
      Latent out = Latent::zeros_like(v);
      const Matrix& m = *jac;
      for (std::size_t r = 0; r < m.n; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < m.n; ++k) s += (transpose ? m(k, r) : m(r, k)) * v[k];
        out[r] = s;
      }
      return out;
    }
  };

  Latent v = sample_gaussian(rng, z.shape());
  for (int attempt = 0; norm2(v) == 0.0; ++attempt) {
    if (attempt > 16) throw Error("scaled_jacobian_norm: could not draw a nonzero start vector");
    v = sample_gaussian(rng, z.shape());
  }
  v *= 1.0 / norm2(v);

  for (std::size_t it = 0; it < power_iters; ++it) {
    Latent gram = apply(apply(v, false), true);
    const double g = norm2(gram);
    if (g == 0.0) return 0.0;
    v = std::move(gram);
    v *= 1.0 / g;
  }
  return scale * norm2(apply(v, false));
}

struct ReconstructionMetrics {
  double l2 = 0.0;    // mean squared error
  double psnr = 0.0;  // dB; +inf when l2 == 0
  double peak = 1.0;
};

inline ReconstructionMetrics reconstruction_metrics(const Latent& original, const Latent& reconstructed,
                                                    double peak = 1.0) {
  original.require_same_shape(reconstructed, "reconstruction_metrics");
  if (!(peak > 0.0)) throw Error("reconstruction_metrics: peak must be positive");
  double sum = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const double d = original[i] - reconstructed[i];
    sum += d * d;
  }
  ReconstructionMetrics m;
  m.peak = peak;
  m.l2 = sum / static_cast<double>(original.size());
  m.psnr = m.l2 > 0.0 ? 10.0 * std::log10(peak * peak / m.l2) : std::numeric_limits<double>::infinity();
  return m;
}

struct AveragingCheck {
  std::size_t m = 0;
  double deviation = 0.0;  // ||mean of last m estimates - fixed point||
  double bound = 0.0;      // max over the last m of ||z^{(k)} - fixed point||
  bool holds = false;
};

/// For each m, compares the uniform average of the last m estimates against
/// the worst of those estimates, both measured from the fixed point.
inline std::vector<AveragingCheck> averaging_convergence_check(const EstimateSeries& series, const Latent& fixed_point,
                                                               const std::vector<std::size_t>& ms) {
  std::vector<AveragingCheck> out;
  const auto& est = series.estimates;
  for (std::size_t m : ms) {
    if (m == 0 || m > est.size()) throw Error("averaging_convergence_check: m out of range");
    Latent avg = Latent::zeros_like(fixed_point);
    double bound = 0.0;
    for (std::size_t k = est.size() - m; k < est.size(); ++k) {
      avg.add_scaled(1.0 / static_cast<double>(m), est[k]);
      bound = std::max(bound, distance(est[k], fixed_point));
    }
    const double dev = distance(avg, fixed_point);
    // Averaging m equal vectors may round by a few ulps.
    const double slack = 8.0 * std::numeric_limits<double>::epsilon() * (1.0 + norm2(fixed_point));
    out.push_back({m, dev, bound, dev <= bound + slack});
  }
  return out;
}

/// Per-step renoising convergence of one inversion.
struct ConvergenceReport {
  struct Step {
    double t = 0.0;
    std::vector<double> delta_norms;      // k = 1..K
    std::vector<double> scaled_jacobian;  // at z^{(k)}, k = 1..K; empty unless measured
    bool diverged = false;
  };
  std::vector<Step> steps;
};

struct JacobianProbe {
  std::size_t power_iters = 50;
  std::optional<double> fd_epsilon;
};

/// Collects consecutive differences and, when `probe` is set, the scaled
/// Jacobian norm at every estimate that fed a renoising iteration.
template <NoisePredictor P>
ConvergenceReport convergence_report(const InversionResult& inv, const Schedule& sched, const P& predictor,
                                     const Conditioning& c, std::optional<JacobianProbe> probe, RngState rng) {
  ConvergenceReport rep;
  for (std::size_t i = 0; i < inv.series.size(); ++i) {
    ConvergenceReport::Step s;
    s.t = sched.timesteps[i];
    s.delta_norms = inv.series[i].diff_norms;
    s.diverged = inv.diverged[i];
    if (probe) {
      const auto& est = inv.series[i].estimates;
      const std::size_t K = s.delta_norms.size();
      if (est.size() < K + 1)
        throw Error("convergence_report: Jacobian probing needs the full estimate history");
      for (std::size_t k = 0; k < K; ++k)
        s.scaled_jacobian.push_back(scaled_jacobian_norm(predictor, est[k], s.t, c, sched.steps[i],
                                                         probe->power_iters, rng, probe->fd_epsilon));
    }
    rep.steps.push_back(std::move(s));
  }
  return rep;
}

}  // namespace renoise
