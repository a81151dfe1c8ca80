#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "renoise/latent.hpp"

namespace renoise {

/// Coefficients of one sampler step z_{t-1} = phi*z_t + psi*eps_theta + rho*eps_t.
struct StepParams {
  double phi = 1.0;
  double psi = 0.0;
  double rho = 0.0;

  bool deterministic() const noexcept { return rho == 0.0; }

  void validate() const {
    if (!std::isfinite(phi) || !std::isfinite(psi) || !std::isfinite(rho))
      throw Error("step coefficients must be finite");
    if (phi == 0.0) throw Error("step coefficient phi must be nonzero");
    if (rho < 0.0) throw Error("step coefficient rho must be non-negative");
  }

  friend bool operator==(const StepParams&, const StepParams&) = default;
};

enum class ScheduleKind { ddim, euler_ode, ancestral, custom };

inline std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::ddim: return "ddim";
    case ScheduleKind::euler_ode: return "euler";
    case ScheduleKind::ancestral: return "ancestral";
    case ScheduleKind::custom: return "custom";
  }
  return "custom";
}

inline ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "ddim") return ScheduleKind::ddim;
  if (name == "euler" || name == "euler_ode") return ScheduleKind::euler_ode;
  if (name == "ancestral") return ScheduleKind::ancestral;
  if (name == "custom") return ScheduleKind::custom;
  throw Error("unknown schedule kind '" + std::string(name) + "'");
}

/// Per-step sampler coefficients plus forward-noising coefficients.
///
/// Step i (0-based) maps z_{i+1} to z_i when denoising. `timesteps[i]` is
/// the time at which the noise predictor is queried for that step, i.e. the
/// time of the noisier endpoint z_{i+1}; `origin` is the time of z_0.
/// `alpha[i]`, `sigma[i]` describe the forward marginal at that same level:
/// z_{i+1}' = alpha[i] * z_0 + sigma[i] * eps.
struct Schedule {
  ScheduleKind kind = ScheduleKind::custom;
  bool variance_preserving = false;
  double origin = 0.0;
  std::vector<double> timesteps;
  std::vector<StepParams> steps;
  std::vector<double> alpha;
  std::vector<double> sigma;

  std::size_t size() const noexcept { return steps.size(); }

  // Time of the cleaner endpoint z_i of step i.
  double source_time(std::size_t i) const { return i == 0 ? origin : timesteps.at(i - 1); }

  bool deterministic() const noexcept {
    for (const auto& s : steps)
      if (!s.deterministic()) return false;
    return true;
  }

  void validate() const {
    const std::size_t T = steps.size();
    if (T == 0) throw Error("schedule has no steps");
    if (timesteps.size() != T || alpha.size() != T || sigma.size() != T)
      throw Error("schedule arrays must all have length " + std::to_string(T));
    for (const auto& s : steps) s.validate();
    for (std::size_t i = 1; i < T; ++i) {
      const bool up = timesteps[i] > timesteps[i - 1];
      const bool first_up = timesteps.size() < 2 || timesteps[1] > timesteps[0];
      if (timesteps[i] == timesteps[i - 1] || up != first_up)
        throw Error("schedule timesteps must be strictly monotone");
    }
    for (std::size_t i = 0; i < T; ++i) {
      if (!(alpha[i] > 0.0 && alpha[i] <= 1.0)) throw Error("schedule alpha must lie in (0,1]");
      if (!(sigma[i] >= 0.0) || !std::isfinite(sigma[i]))
        throw Error("schedule sigma must be finite and non-negative");
      if (variance_preserving) {
        const double total = alpha[i] * alpha[i] + sigma[i] * sigma[i];
        if (std::abs(total - 1.0) > 1e-9)
          throw Error("variance-preserving schedule violates alpha^2 + sigma^2 = 1 at step " +
                      std::to_string(i));
      }
    }
  }
};

namespace detail {

inline void check_alpha_bar(std::span<const double> alpha_bar) {
  if (alpha_bar.empty()) throw Error("alpha_bar must not be empty");
  for (std::size_t i = 0; i < alpha_bar.size(); ++i) {
    const double a = alpha_bar[i];
    if (!(a > 0.0 && a <= 1.0)) throw Error("alpha_bar entries must lie in (0,1]");
    if (i > 0 && !(a < alpha_bar[i - 1])) throw Error("alpha_bar must be strictly decreasing");
  }
}

}  // namespace detail

/// Deterministic DDIM. `alpha_bar` lists the cumulative signal levels of
/// z_1..z_T; the clean level of z_0 is 1.
inline Schedule build_ddim_schedule(std::span<const double> alpha_bar) {
  detail::check_alpha_bar(alpha_bar);
  Schedule s;
  s.kind = ScheduleKind::ddim;
  s.variance_preserving = true;
  s.origin = 0.0;
  double prev = 1.0;
  for (std::size_t i = 0; i < alpha_bar.size(); ++i) {
    const double cur = alpha_bar[i];
    const double phi = std::sqrt(prev / cur);
    const double psi = std::sqrt(1.0 - prev) - phi * std::sqrt(1.0 - cur);
    s.steps.push_back({phi, psi, 0.0});
    s.timesteps.push_back(static_cast<double>(i + 1));
    s.alpha.push_back(std::sqrt(cur));
    s.sigma.push_back(std::sqrt(1.0 - cur));
    prev = cur;
  }
  s.validate();
  return s;
}

/// Forward-Euler integration of dz/dt = f(t, z) in the noising direction,
/// written as a denoising step z_prev = z - h * f(t + h, z).
inline Schedule build_euler_ode_schedule(double t0, std::span<const double> step_sizes) {
  if (step_sizes.empty()) throw Error("euler schedule needs at least one step");
  Schedule s;
  s.kind = ScheduleKind::euler_ode;
  s.variance_preserving = false;
  s.origin = t0;
  double t = t0;
  for (double h : step_sizes) {
    if (!(h > 0.0) || !std::isfinite(h)) throw Error("euler step size must be positive");
    t += h;
    s.steps.push_back({1.0, -h, 0.0});
    s.timesteps.push_back(t);
    s.alpha.push_back(1.0);
    s.sigma.push_back(0.0);
  }
  s.validate();
  return s;
}

/// Euler-ancestral in noise-level space x = z / sqrt(alpha_bar), where the
/// carry-over coefficient is exactly 1. `eta` scales the injected noise. The
/// step into z_0 has sigma_prev = 0 and therefore never injects noise.
inline Schedule build_ancestral_schedule(std::span<const double> alpha_bar, double eta = 1.0) {
  detail::check_alpha_bar(alpha_bar);
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw Error("ancestral eta must be non-negative");
  Schedule s;
  s.kind = ScheduleKind::ancestral;
  s.variance_preserving = false;
  s.origin = 0.0;
  double sigma_prev = 0.0;
  for (std::size_t i = 0; i < alpha_bar.size(); ++i) {
    const double sigma_cur = std::sqrt((1.0 - alpha_bar[i]) / alpha_bar[i]);
    double sigma_up = 0.0;
    if (sigma_cur > 0.0) {
      const double var_up =
          sigma_prev * sigma_prev * (sigma_cur * sigma_cur - sigma_prev * sigma_prev) /
          (sigma_cur * sigma_cur);
      sigma_up = std::min(sigma_prev, eta * std::sqrt(std::max(var_up, 0.0)));
    }
    const double sigma_down = std::sqrt(std::max(sigma_prev * sigma_prev - sigma_up * sigma_up, 0.0));
    s.steps.push_back({1.0, sigma_down - sigma_cur, sigma_up});
    s.timesteps.push_back(static_cast<double>(i + 1));
    s.alpha.push_back(1.0);
    s.sigma.push_back(sigma_cur);
    sigma_prev = sigma_cur;
  }
  s.validate();
  return s;
}

/// Log-linear alpha_bar grid from 1 (exclusive) down to `alpha_bar_min` over
/// `steps` levels.
inline std::vector<double> log_linear_alpha_bar(std::size_t steps, double alpha_bar_min) {
  if (steps == 0) throw Error("alpha_bar grid needs at least one step");
  if (!(alpha_bar_min > 0.0 && alpha_bar_min < 1.0))
    throw Error("alpha_bar_min must lie in (0,1)");
  std::vector<double> out(steps);
  const double log_min = std::log(alpha_bar_min);
  for (std::size_t i = 0; i < steps; ++i)
    out[i] = std::exp(log_min * static_cast<double>(i + 1) / static_cast<double>(steps));
  return out;
}

// ---------------------------------------------------------------------------
// Text serialization: one "key: v v v" line per field, reals at 17
// significant digits so that parsing reproduces every coefficient exactly.

namespace detail {

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_row(std::ostringstream& os, std::string_view key, const std::vector<double>& xs) {
  os << key << ":";
  for (double v : xs) os << ' ' << format_real(v);
  os << '\n';
}

}  // namespace detail

inline std::string schedule_to_text(const Schedule& s) {
  std::ostringstream os;
  os << "kind: " << to_string(s.kind) << '\n';
  os << "variance_preserving: " << (s.variance_preserving ? 1 : 0) << '\n';
  os << "origin: " << detail::format_real(s.origin) << '\n';
  std::vector<double> phi, psi, rho;
  for (const auto& p : s.steps) {
    phi.push_back(p.phi);
    psi.push_back(p.psi);
    rho.push_back(p.rho);
  }
  detail::write_row(os, "timesteps", s.timesteps);
  detail::write_row(os, "phi", phi);
  detail::write_row(os, "psi", psi);
  detail::write_row(os, "rho", rho);
  detail::write_row(os, "alpha", s.alpha);
  detail::write_row(os, "sigma", s.sigma);
  return os.str();
}

inline Schedule schedule_from_text(std::string_view text) {
  Schedule s;
  std::vector<double> phi, psi, rho;
  bool seen_kind = false;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos)
      throw Error("schedule text line " + std::to_string(lineno) + ": missing ':'");
    const std::string key = line.substr(0, colon);
    std::istringstream values(line.substr(colon + 1));
    auto read_reals = [&] {
      std::vector<double> xs;
      std::string tok;
      while (values >> tok) {
        try {
          xs.push_back(std::stod(tok));
        } catch (const std::exception&) {
          throw Error("schedule text line " + std::to_string(lineno) + ": bad number '" + tok + "'");
        }
      }
      return xs;
    };
    if (key == "kind") {
      std::string name;
      values >> name;
      s.kind = parse_schedule_kind(name);
      seen_kind = true;
    } else if (key == "variance_preserving") {
      int flag = 0;
      values >> flag;
      s.variance_preserving = flag != 0;
    } else if (key == "origin") {
      auto xs = read_reals();
      if (xs.size() != 1) throw Error("schedule text: origin takes one value");
      s.origin = xs[0];
    } else if (key == "timesteps") {
      s.timesteps = read_reals();
    } else if (key == "phi") {
      phi = read_reals();
    } else if (key == "psi") {
      psi = read_reals();
    } else if (key == "rho") {
      rho = read_reals();
    } else if (key == "alpha") {
      s.alpha = read_reals();
    } else if (key == "sigma") {
      s.sigma = read_reals();
    } else {
      throw Error("schedule text line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  if (!seen_kind) throw Error("schedule text: missing 'kind'");
  if (phi.size() != psi.size() || phi.size() != rho.size())
    throw Error("schedule text: phi/psi/rho lengths differ");
  for (std::size_t i = 0; i < phi.size(); ++i) s.steps.push_back({phi[i], psi[i], rho[i]});
  s.validate();
  return s;
}

}  // namespace renoise
