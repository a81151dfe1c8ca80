#include "commands.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>

namespace renoise::app {
namespace fs = std::filesystem;

namespace {

constexpr double kToyTolerance = 1e-10;

std::ofstream open_output(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out_dir);
  const fs::path path = fs::path(cfg.out_dir) / name;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write '" + path.string() + "'");
  return os;
}

// Runs `fn(predictor)` with the configured predictor's concrete type.
template <class F>
auto with_predictor(const RunConfig& cfg, F&& fn) {
  const AnyPredictor predictor = make_predictor(cfg.predictor, shape_volume(cfg.latent.shape));
  return std::visit(std::forward<F>(fn), predictor);
}

template <class F>
int guarded(std::ostream& err, F&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace

RunConfig resolve_config(const GlobalOptions& opts) {
  Json doc = opts.config_path ? load_json_file(*opts.config_path) : Json::object();
  for (const auto& o : opts.overrides) apply_override(doc, o);
  RunConfig cfg = parse_run_config(doc);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.out_dir) cfg.out_dir = *opts.out_dir;
  return cfg;
}

int cmd_toy(const ToyOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!(opts.dt > 0.0)) throw Error("toy: --dt must be positive");
    if (opts.steps == 0) throw Error("toy: --steps must be positive");
    const ToyShiftedGaussian toy(opts.a);
    const Schedule sched = build_euler_ode_schedule(0.0, std::vector<double>(opts.steps, opts.dt));
    const Latent z0({1}, opts.z0);

    RenoiseConfig cfg;
    cfg.first_estimate = FirstEstimateTime::source;
    cfg.K = 1;
    cfg.weights = RenoiseWeights::last_estimate(1);
    const InversionResult renoised = renoise_inversion(z0, toy, sched, cfg, RngState{}, {});
    cfg.K = 0;
    cfg.weights = RenoiseWeights::last_estimate(0);
    const InversionResult euler = renoise_inversion(z0, toy, sched, cfg, RngState{}, {});

    auto preimage_error = [&](const InversionResult& inv, std::size_t i) {
      const Latent& z = inv.latents[i + 1];
      const Latent back = denoise_step(z, toy.evaluate(z, sched.timesteps[i], {}), std::nullopt, sched.steps[i]);
      return max_abs_diff(back, inv.latents[i]);
    };

    out << "step,t,z_t,renoise_error,forward_euler_error\n";
    double worst = 0.0;
    for (std::size_t i = 0; i < sched.size(); ++i) {
      const double e = preimage_error(renoised, i);
      worst = std::max(worst, e);
      out << (i + 1) << ',' << csv_real(sched.timesteps[i]) << ',' << csv_real(renoised.latents[i + 1][0]) << ','
          << csv_real(e) << ',' << csv_real(preimage_error(euler, i)) << '\n';
    }
    out << "max_error " << csv_real(worst) << (worst <= kToyTolerance ? " PASS" : " FAIL") << '\n';
    return worst <= kToyTolerance ? 0 : 1;
  });
}

int cmd_invert(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Schedule sched = cfg.schedule.build();
    const Latent z0 = make_initial_latent(cfg);
    const InversionResult inv = with_predictor(cfg, [&](const auto& p) {
      return renoise_inversion(z0, p, sched, cfg.renoise, inversion_rng(cfg), Conditioning{cfg.conditioning});
    });
    {
      auto os = open_output(cfg, "inversion.rnzt");
      write_trajectory(os, inv.trajectory());
    }
    {
      auto os = open_output(cfg, "schedule.txt");
      os << schedule_to_text(sched);
    }
    std::size_t diverged = 0;
    for (bool d : inv.diverged) diverged += d ? 1 : 0;
    {
      auto os = open_output(cfg, "inversion_metrics.csv");
      os << "op_count,renoise_ops,reference_ops,correction_ops,diverged_steps,zT_norm\n"
         << inv.op_count() << ',' << inv.ops.renoise << ',' << inv.ops.reference << ',' << inv.ops.correction << ','
         << diverged << ',' << csv_real(norm2(inv.zT)) << '\n';
    }
    out << "op_count " << inv.op_count() << '\n';
    if (diverged) err << "warning: " << diverged << " step(s) flagged divergent; used their last estimate\n";
    return 0;
  });
}

int cmd_reconstruct(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Schedule sched = cfg.schedule.build();
    const Latent z0 = make_initial_latent(cfg);
    const Conditioning c{cfg.conditioning};
    return with_predictor(cfg, [&](const auto& p) {
      using P = std::decay_t<decltype(p)>;
      CountingPredictor<P> counted(p);
      const InversionResult inv = renoise_inversion(z0, counted, sched, cfg.renoise, inversion_rng(cfg), c);
      const Trajectory recon = denoise_trajectory(inv.zT, inv.noises, counted, sched, c);
      const ReconstructionMetrics m = reconstruction_metrics(z0, recon.latents.front(), cfg.peak);
      const std::size_t op_count = counted.calls();
      {
        auto os = open_output(cfg, "inversion.rnzt");
        write_trajectory(os, inv.trajectory());
      }
      {
        auto os = open_output(cfg, "reconstruction.rnzt");
        write_trajectory(os, recon);
      }
      {
        auto os = open_output(cfg, "metrics.csv");
        write_metrics_csv(os, m, op_count);
      }
      out << "op_count " << op_count << "\nl2 " << csv_real(m.l2) << "\npsnr " << csv_real(m.psnr) << '\n';
      if (op_count != inv.op_count() + sched.size()) {
        err << "error: counted " << op_count << " predictor evaluations, engine reported "
            << inv.op_count() + sched.size() << '\n';
        return 1;
      }
      return 0;
    });
  });
}

int cmd_diagnose(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Schedule sched = cfg.schedule.build();
    const Latent z0 = make_initial_latent(cfg);
    const Conditioning c{cfg.conditioning};
    RenoiseConfig rcfg = cfg.renoise;
    rcfg.max_estimate_history = std::numeric_limits<std::size_t>::max();
    const ConvergenceReport rep = with_predictor(cfg, [&](const auto& p) {
      const InversionResult inv = renoise_inversion(z0, p, sched, rcfg, inversion_rng(cfg), c);
      std::optional<JacobianProbe> probe;
      if (cfg.diagnostics.jacobian) probe = JacobianProbe{cfg.diagnostics.power_iters, cfg.diagnostics.fd_epsilon};
      return convergence_report(inv, sched, p, c, probe, probe_rng(cfg));
    });
    {
      auto os = open_output(cfg, "diagnostics.csv");
      write_convergence_csv(os, rep);
    }
    std::size_t rows = 0, diverged = 0;
    for (const auto& s : rep.steps) {
      rows += s.delta_norms.size();
      diverged += s.diverged ? 1 : 0;
    }
    out << "steps " << rep.steps.size() << "\nrows " << rows << "\ndiverged_steps " << diverged << '\n';
    return 0;
  });
}

int cmd_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (cfg.sweep_rows.empty()) throw Error("sweep: config has no sweep.rows");
    auto [rows, dropped] = dedupe_budget_rows(cfg.sweep_rows);
    if (dropped) err << "warning: dropped " << dropped << " duplicate sweep row(s)\n";
    const Latent z0 = make_initial_latent(cfg);
    const ScheduleFamily family = [&](std::size_t n) { return cfg.schedule.build(n); };
    const auto results = with_predictor(cfg, [&](const auto& p) {
      return operation_budget_sweep(z0, p, family, rows, cfg.renoise, inversion_rng(cfg),
                                    Conditioning{cfg.conditioning}, cfg.peak);
    });
    {
      auto os = open_output(cfg, "sweep.csv");
      write_budget_csv(os, results);
    }
    write_budget_csv(out, results);
    return 0;
  });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"ReNoise inversion engine: fixed-point renoising for diffusion sampler inversion"};
  app.require_subcommand(1);
  GlobalOptions global;
  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  auto* config_opt = app.add_option("--config", config_path, "JSON run configuration");
  auto* seed_opt = app.add_option("--seed", seed, "Run seed (overrides the config)");
  auto* out_opt = app.add_option("--out", out_dir, "Output directory (overrides the config)");
  app.add_option("--set", global.overrides, "Override a config key: --set renoise.k=3")->take_all();

  ToyOptions toy;
  auto* toy_cmd = app.add_subcommand("toy", "Shifted-Gaussian toy inversion; exits 0 iff every pre-image is exact");
  toy_cmd->add_option("--dt", toy.dt, "Euler step size");
  toy_cmd->add_option("--a", toy.a, "Distribution shift (nonzero)");
  toy_cmd->add_option("--z0", toy.z0, "Initial state");
  toy_cmd->add_option("--steps", toy.steps, "Number of inversion steps");

  auto* invert_cmd = app.add_subcommand("invert", "Invert z_0 and write the trajectory");
  auto* reconstruct_cmd = app.add_subcommand("reconstruct", "Invert, denoise, and report L2/PSNR");
  auto* diagnose_cmd = app.add_subcommand("diagnose", "Write per-(t,k) convergence diagnostics");
  auto* sweep_cmd = app.add_subcommand("sweep", "Equal-budget comparison over sweep.rows");
  for (auto* sub : {toy_cmd, invert_cmd, reconstruct_cmd, diagnose_cmd, sweep_cmd}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  if (*config_opt) global.config_path = config_path;
  if (*seed_opt) global.seed = seed;
  if (*out_opt) global.out_dir = out_dir;

  if (*toy_cmd) return cmd_toy(toy, out, err);

  RunConfig cfg;
  try {
    cfg = resolve_config(global);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  if (*invert_cmd) return cmd_invert(cfg, out, err);
  if (*reconstruct_cmd) return cmd_reconstruct(cfg, out, err);
  if (*diagnose_cmd) return cmd_diagnose(cfg, out, err);
  return cmd_sweep(cfg, out, err);
}

}  // namespace renoise::app
