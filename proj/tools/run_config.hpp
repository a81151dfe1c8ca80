#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "renoise/renoise_all.hpp"

namespace renoise::app {

using Json = nlohmann::json;

struct LatentSpec {
  Shape shape{1, 8, 8};
  double scale = 1.0;
  std::vector<double> values;  // explicit z_0; overrides the seeded draw
};

enum class PredictorKind { toy, linear, seeded_nonlinear };

struct PredictorSpec {
  PredictorKind kind = PredictorKind::seeded_nonlinear;
  double a = 1.0;                          // toy
  std::vector<std::vector<double>> matrix; // linear, explicit
  std::vector<double> diag;                // linear, diagonal
  std::optional<double> orthogonal_scale;  // linear, s * Q with seeded orthogonal Q
  std::uint64_t matrix_seed = 0;
  SeededNonlinearParams nonlinear;
};

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::ddim;
  std::size_t steps = 4;
  double alpha_bar_min = 0.1;
  std::vector<double> alpha_bar;  // explicit levels; overrides steps/alpha_bar_min
  double eta = 1.0;               // ancestral noise scale
  double t0 = 0.0;                // euler
  double step_size = 0.1;         // euler, uniform
  std::vector<double> step_sizes; // euler, explicit

  /// Schedule with `steps` levels (the family member used by sweeps).
  Schedule build(std::size_t steps) const;
  Schedule build() const;
};

struct DiagnosticsSpec {
  bool jacobian = true;
  std::size_t power_iters = 50;
  std::optional<double> fd_epsilon;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string conditioning;
  LatentSpec latent;
  PredictorSpec predictor;
  ScheduleSpec schedule;
  RenoiseConfig renoise;
  DiagnosticsSpec diagnostics;
  double peak = 1.0;
  std::vector<BudgetRow> sweep_rows;
};

/// Parses a config document. Unknown keys are rejected with their dotted
/// path, e.g. "unknown config key 'renoise.foo'".
RunConfig parse_run_config(const Json& doc);

/// Inverse of parse_run_config: parse_run_config(to_json(c)) reproduces c.
Json to_json(const RunConfig& cfg);

/// Applies "dotted.key=value" to a config document. The value is read as
/// JSON when it parses, otherwise as a string.
void apply_override(Json& doc, std::string_view assignment);

Json load_json_file(const std::string& path);

using AnyPredictor = std::variant<ToyShiftedGaussian, LinearPredictor, SeededNonlinear>;

AnyPredictor make_predictor(const PredictorSpec& spec, std::size_t dim);

/// z_0 from the explicit values or a seeded standard-normal draw times scale.
Latent make_initial_latent(const RunConfig& cfg);

// Stream keys derived from the run seed.
inline RngState latent_rng(const RunConfig& c) { return RngState{c.seed, 0}.fork(100); }
inline RngState inversion_rng(const RunConfig& c) { return RngState{c.seed, 0}.fork(200); }
inline RngState probe_rng(const RunConfig& c) { return RngState{c.seed, 0}.fork(300); }

}  // namespace renoise::app
