#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace renoise::app {

struct GlobalOptions {
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::vector<std::string> overrides;  // "key=value"
};

struct ToyOptions {
  double dt = 0.1;
  double a = 1.0;
  double z0 = 2.0;
  std::size_t steps = 1;
};

/// Config file (or defaults), then --set overrides, then --seed / --out.
RunConfig resolve_config(const GlobalOptions& opts);

// Each command returns the process exit status: 0 when every internal check
// passed, 1 when a check failed, 2 on invalid input or IO errors.
int cmd_toy(const ToyOptions& opts, std::ostream& out, std::ostream& err);
int cmd_invert(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_reconstruct(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_diagnose(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Full command line: toy | invert | reconstruct | diagnose | sweep.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace renoise::app
