#include "run_config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace renoise::app {
namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported with their full dotted path.
class Section {
 public:
  Section(const Json& node, std::string path) : node_(&node), path_(std::move(path)) {
    if (!node.is_object()) throw Error("config key '" + display() + "': expected an object");
  }

  bool has(const std::string& key) const { return node_->contains(key); }

  template <class T>
  std::optional<T> opt(const std::string& key) {
    seen_.insert(key);
    if (!node_->contains(key)) return std::nullopt;
    const Json& v = node_->at(key);
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
          throw Error("expected a non-negative integer");
      }
      if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw Error("expected a number");
      }
      return v.get<T>();
    } catch (const Json::exception& e) {
      throw Error("config key '" + child(key) + "': " + e.what());
    } catch (const Error& e) {
      throw Error("config key '" + child(key) + "': " + e.what());
    }
  }

  template <class T>
  void read(const std::string& key, T& out) {
    if (auto v = opt<T>(key)) out = std::move(*v);
  }

  std::optional<Section> sub(const std::string& key) {
    seen_.insert(key);
    if (!node_->contains(key)) return std::nullopt;
    return Section(node_->at(key), child(key));
  }

  const Json* raw(const std::string& key) {
    seen_.insert(key);
    return node_->contains(key) ? &node_->at(key) : nullptr;
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = node_->begin(); it != node_->end(); ++it)
      if (!seen_.count(it.key())) throw Error("unknown config key '" + child(it.key()) + "'");
  }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  const Json* node_;
  std::string path_;
  std::set<std::string> seen_;
};

EditLossConfig parse_edit(Section s) {
  EditLossConfig e;
  s.read("lambda_pair", e.lambda_pair);
  s.read("lambda_patch_kl", e.lambda_patch_kl);
  s.read("patch_size", e.patch_size);
  if (auto v = s.opt<double>("step_size")) e.step_size = *v;
  if (const Json* shifts = s.raw("shifts")) {
    e.shifts.clear();
    if (!shifts->is_array()) throw Error("config key '" + s.child("shifts") + "': expected an array");
    for (const Json& sh : *shifts) {
      if (!sh.is_array() || sh.size() != 2 || !sh[0].is_number_integer() || !sh[1].is_number_integer())
        throw Error("config key '" + s.child("shifts") + "': each shift is [dy, dx]");
      e.shifts.push_back({sh[0].get<int>(), sh[1].get<int>()});
    }
  }
  s.finish();
  e.validate();
  return e;
}

NoiseCorrection parse_nc(Section s) {
  NoiseCorrection nc;
  if (auto mode = s.opt<std::string>("mode")) {
    if (*mode == "off") nc.mode = NoiseCorrectionMode::off;
    else if (*mode == "exact") nc.mode = NoiseCorrectionMode::exact;
    else if (*mode == "optimize") nc.mode = NoiseCorrectionMode::optimize;
    else throw Error("config key '" + s.child("mode") + "': expected off, exact or optimize");
  }
  s.read("eta", nc.eta);
  s.read("iters", nc.iters);
  s.finish();
  if (!(nc.eta > 0.0 && nc.eta <= 1.0)) throw Error("config key '" + s.child("eta") + "': must lie in (0, 1]");
  return nc;
}

RenoiseWeights parse_bands(const Json& arr, const std::string& path) {
  if (!arr.is_array()) throw Error("config key '" + path + "': expected an array");
  std::vector<WeightBand> bands;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    Section b(arr[i], path + "[" + std::to_string(i) + "]");
    WeightBand band;
    b.read("t_min", band.t_min);
    b.read("t_max", band.t_max);
    b.read("weights", band.weights);
    b.finish();
    bands.push_back(std::move(band));
  }
  try {
    return RenoiseWeights(std::move(bands));
  } catch (const Error& e) {
    throw Error("config key '" + path + "': " + e.what());
  }
}

ScheduleKind parse_kind(const std::string& name, const std::string& path) {
  try {
    return parse_schedule_kind(name);
  } catch (const Error& e) {
    throw Error("config key '" + path + "': " + e.what());
  }
}

std::string_view predictor_name(PredictorKind k) {
  switch (k) {
    case PredictorKind::toy: return "toy";
    case PredictorKind::linear: return "linear";
    case PredictorKind::seeded_nonlinear: return "seeded_nonlinear";
  }
  return "toy";
}

}  // namespace

Schedule ScheduleSpec::build(std::size_t n) const {
  if (n == 0) throw Error("schedule has no timesteps");
  switch (kind) {
    case ScheduleKind::ddim:
    case ScheduleKind::ancestral: {
      std::vector<double> levels = alpha_bar;
      if (levels.empty()) {
        levels = log_linear_alpha_bar(n, alpha_bar_min);
      } else if (levels.size() != n) {
        throw Error("explicit alpha_bar has " + std::to_string(levels.size()) + " levels, " + std::to_string(n) +
                    " requested");
      }
      return kind == ScheduleKind::ddim ? build_ddim_schedule(levels) : build_ancestral_schedule(levels, eta);
    }
    case ScheduleKind::euler_ode: {
      std::vector<double> h = step_sizes;
      if (h.empty()) {
        const double duration = step_size * static_cast<double>(steps);
        h.assign(n, duration / static_cast<double>(n));
      } else if (h.size() != n) {
        throw Error("explicit step_sizes has " + std::to_string(h.size()) + " entries, " + std::to_string(n) +
                    " requested");
      }
      return build_euler_ode_schedule(t0, h);
    }
    case ScheduleKind::custom: break;
  }
  throw Error("schedule kind 'custom' cannot be built from a config");
}

Schedule ScheduleSpec::build() const {
  if (!alpha_bar.empty() && kind != ScheduleKind::euler_ode) return build(alpha_bar.size());
  if (!step_sizes.empty() && kind == ScheduleKind::euler_ode) return build(step_sizes.size());
  return build(steps);
}

RunConfig parse_run_config(const Json& doc) {
  RunConfig cfg;
  Section root(doc, "");
  root.read("seed", cfg.seed);
  root.read("out", cfg.out_dir);
  root.read("conditioning", cfg.conditioning);

  if (auto s = root.sub("latent")) {
    if (const Json* shape = s->raw("shape")) {
      if (!shape->is_array()) throw Error("config key 'latent.shape': expected an array");
      cfg.latent.shape.clear();
      for (const Json& d : *shape) {
        if (!d.is_number_unsigned() || d.get<std::uint64_t>() == 0)
          throw Error("config key 'latent.shape': entries must be positive integers");
        cfg.latent.shape.push_back(d.get<std::size_t>());
      }
    }
    s->read("scale", cfg.latent.scale);
    s->read("values", cfg.latent.values);
    s->finish();
    try {
      const std::size_t n = shape_volume(cfg.latent.shape);
      if (!cfg.latent.values.empty() && cfg.latent.values.size() != n)
        throw Error("values length does not match shape");
    } catch (const Error& e) {
      throw Error("config key 'latent': " + std::string(e.what()));
    }
  }

  if (auto s = root.sub("predictor")) {
    auto& p = cfg.predictor;
    if (auto kind = s->opt<std::string>("kind")) {
      if (*kind == "toy") p.kind = PredictorKind::toy;
      else if (*kind == "linear") p.kind = PredictorKind::linear;
      else if (*kind == "seeded_nonlinear") p.kind = PredictorKind::seeded_nonlinear;
      else throw Error("config key 'predictor.kind': expected toy, linear or seeded_nonlinear");
    }
    switch (p.kind) {
      case PredictorKind::toy:
        s->read("a", p.a);
        if (p.a == 0.0) throw Error("config key 'predictor.a': shift must be nonzero");
        break;
      case PredictorKind::linear:
        s->read("matrix", p.matrix);
        s->read("diag", p.diag);
        if (auto v = s->opt<double>("orthogonal_scale")) p.orthogonal_scale = *v;
        s->read("seed", p.matrix_seed);
        if (int(!p.matrix.empty()) + int(!p.diag.empty()) + int(p.orthogonal_scale.has_value()) != 1)
          throw Error("config key 'predictor': linear needs exactly one of matrix, diag, orthogonal_scale");
        break;
      case PredictorKind::seeded_nonlinear:
        s->read("seed", p.nonlinear.seed);
        s->read("width", p.nonlinear.width);
        s->read("scale", p.nonlinear.scale);
        s->read("gain", p.nonlinear.gain);
        break;
    }
    s->finish();
  }

  if (auto s = root.sub("schedule")) {
    auto& sc = cfg.schedule;
    if (auto kind = s->opt<std::string>("kind")) sc.kind = parse_kind(*kind, s->child("kind"));
    s->read("steps", sc.steps);
    s->read("alpha_bar_min", sc.alpha_bar_min);
    s->read("alpha_bar", sc.alpha_bar);
    s->read("eta", sc.eta);
    s->read("t0", sc.t0);
    s->read("step_size", sc.step_size);
    s->read("step_sizes", sc.step_sizes);
    s->finish();
  }

  std::optional<EditLossConfig> edit;
  std::optional<NoiseCorrection> nc;
  if (auto s = root.sub("renoise")) {
    auto& r = cfg.renoise;
    s->read("k", r.K);
    if (auto fe = s->opt<std::string>("first_estimate")) {
      if (*fe == "step") r.first_estimate = FirstEstimateTime::step;
      else if (*fe == "source") r.first_estimate = FirstEstimateTime::source;
      else throw Error("config key 'renoise.first_estimate': expected step or source");
    }
    s->read("band_fraction", r.band_fraction);
    s->read("max_estimate_history", r.max_estimate_history);
    if (const Json* bands = s->raw("weight_bands")) r.weights = parse_bands(*bands, s->child("weight_bands"));
    if (auto e = s->sub("edit_loss")) edit = parse_edit(*e);
    if (auto n = s->sub("noise_correction")) nc = parse_nc(*n);
    s->finish();
  }
  if (auto e = root.sub("edit")) {
    if (edit) throw Error("config key 'edit': duplicates 'renoise.edit_loss'");
    edit = parse_edit(*e);
  }
  if (auto n = root.sub("nc")) {
    if (nc) throw Error("config key 'nc': duplicates 'renoise.noise_correction'");
    nc = parse_nc(*n);
  }
  cfg.renoise.edit_loss = edit;
  if (nc) cfg.renoise.noise_correction = *nc;

  if (auto s = root.sub("diagnostics")) {
    s->read("jacobian", cfg.diagnostics.jacobian);
    s->read("power_iters", cfg.diagnostics.power_iters);
    if (auto v = s->opt<double>("fd_epsilon")) cfg.diagnostics.fd_epsilon = *v;
    s->finish();
  }
  if (auto s = root.sub("metrics")) {
    s->read("peak", cfg.peak);
    s->finish();
    if (!(cfg.peak > 0.0)) throw Error("config key 'metrics.peak': must be positive");
  }
  if (auto s = root.sub("sweep")) {
    if (const Json* rows = s->raw("rows")) {
      if (!rows->is_array()) throw Error("config key 'sweep.rows': expected an array");
      for (std::size_t i = 0; i < rows->size(); ++i) {
        Section r((*rows)[i], "sweep.rows[" + std::to_string(i) + "]");
        BudgetRow row;
        r.read("inversion_steps", row.inversion_steps);
        r.read("denoise_steps", row.denoise_steps);
        r.read("k", row.K);
        r.finish();
        if (row.inversion_steps == 0 || row.denoise_steps == 0)
          throw Error("config key '" + r.child("inversion_steps") + "': step counts must be positive");
        cfg.sweep_rows.push_back(row);
      }
    }
    s->finish();
  }
  root.finish();
  return cfg;
}

Json to_json(const RunConfig& cfg) {
  Json j;
  j["seed"] = cfg.seed;
  j["out"] = cfg.out_dir;
  j["conditioning"] = cfg.conditioning;
  j["latent"] = {{"shape", cfg.latent.shape}, {"scale", cfg.latent.scale}};
  if (!cfg.latent.values.empty()) j["latent"]["values"] = cfg.latent.values;

  Json p;
  const auto& ps = cfg.predictor;
  p["kind"] = predictor_name(ps.kind);
  switch (ps.kind) {
    case PredictorKind::toy: p["a"] = ps.a; break;
    case PredictorKind::linear:
      if (!ps.matrix.empty()) p["matrix"] = ps.matrix;
      if (!ps.diag.empty()) p["diag"] = ps.diag;
      if (ps.orthogonal_scale) p["orthogonal_scale"] = *ps.orthogonal_scale;
      p["seed"] = ps.matrix_seed;
      break;
    case PredictorKind::seeded_nonlinear:
      p["seed"] = ps.nonlinear.seed;
      p["width"] = ps.nonlinear.width;
      p["scale"] = ps.nonlinear.scale;
      p["gain"] = ps.nonlinear.gain;
      break;
  }
  j["predictor"] = p;

  const auto& sc = cfg.schedule;
  j["schedule"] = {{"kind", std::string(to_string(sc.kind))},
                   {"steps", sc.steps},
                   {"alpha_bar_min", sc.alpha_bar_min},
                   {"eta", sc.eta},
                   {"t0", sc.t0},
                   {"step_size", sc.step_size}};
  if (!sc.alpha_bar.empty()) j["schedule"]["alpha_bar"] = sc.alpha_bar;
  if (!sc.step_sizes.empty()) j["schedule"]["step_sizes"] = sc.step_sizes;

  const auto& r = cfg.renoise;
  Json rj;
  rj["k"] = r.K;
  rj["first_estimate"] = r.first_estimate == FirstEstimateTime::source ? "source" : "step";
  rj["band_fraction"] = r.band_fraction;
  rj["max_estimate_history"] = r.max_estimate_history;
  if (r.weights) {
    Json bands = Json::array();
    for (const auto& b : r.weights->bands()) {
      Json bj{{"weights", b.weights}};
      if (std::isfinite(b.t_min)) bj["t_min"] = b.t_min;
      if (std::isfinite(b.t_max)) bj["t_max"] = b.t_max;
      bands.push_back(bj);
    }
    rj["weight_bands"] = bands;
  }
  j["renoise"] = rj;

  if (r.edit_loss) {
    const auto& e = *r.edit_loss;
    Json ej{{"lambda_pair", e.lambda_pair}, {"lambda_patch_kl", e.lambda_patch_kl}, {"patch_size", e.patch_size}};
    if (e.step_size) ej["step_size"] = *e.step_size;
    Json shifts = Json::array();
    for (const auto& s : e.shifts) shifts.push_back({s.dy, s.dx});
    ej["shifts"] = shifts;
    j["edit"] = ej;
  }
  const auto& nc = r.noise_correction;
  j["nc"] = {{"mode", nc.mode == NoiseCorrectionMode::off     ? "off"
                      : nc.mode == NoiseCorrectionMode::exact ? "exact"
                                                              : "optimize"},
             {"eta", nc.eta},
             {"iters", nc.iters}};

  j["diagnostics"] = {{"jacobian", cfg.diagnostics.jacobian}, {"power_iters", cfg.diagnostics.power_iters}};
  if (cfg.diagnostics.fd_epsilon) j["diagnostics"]["fd_epsilon"] = *cfg.diagnostics.fd_epsilon;
  j["metrics"] = {{"peak", cfg.peak}};
  if (!cfg.sweep_rows.empty()) {
    Json rows = Json::array();
    for (const auto& row : cfg.sweep_rows)
      rows.push_back({{"inversion_steps", row.inversion_steps}, {"denoise_steps", row.denoise_steps}, {"k", row.K}});
    j["sweep"] = {{"rows", rows}};
  }
  return j;
}

void apply_override(Json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw Error("--set expects key=value, got '" + std::string(assignment) + "'");
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw Error("--set: malformed key '" + key + "'");
    if (!node->is_object()) {
      if (!node->is_null()) throw Error("--set: '" + key + "' descends into a non-object");
      *node = Json::object();
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error("config '" + path + "': " + e.what());
  }
}

AnyPredictor make_predictor(const PredictorSpec& spec, std::size_t dim) {
  switch (spec.kind) {
    case PredictorKind::toy: return ToyShiftedGaussian(spec.a);
    case PredictorKind::linear: {
      Matrix m;
      if (!spec.matrix.empty()) {
        m = Matrix::from_rows(spec.matrix);
      } else if (!spec.diag.empty()) {
        m = Matrix::diagonal(spec.diag);
      } else if (spec.orthogonal_scale) {
        m = random_orthogonal(dim, spec.matrix_seed);
        for (double& v : m.entries) v *= *spec.orthogonal_scale;
      } else {
        throw Error("linear predictor needs matrix, diag or orthogonal_scale");
      }
      if (m.n != dim)
        throw Error("linear predictor is " + std::to_string(m.n) + "-dimensional but the latent has " +
                    std::to_string(dim) + " entries");
      return LinearPredictor(std::move(m));
    }
    case PredictorKind::seeded_nonlinear: return SeededNonlinear(spec.nonlinear, dim);
  }
  throw Error("unknown predictor kind");
}

Latent make_initial_latent(const RunConfig& cfg) {
  if (!cfg.latent.values.empty()) return Latent(cfg.latent.shape, cfg.latent.values);
  RngState rng = latent_rng(cfg);
  return sample_gaussian(rng, cfg.latent.shape) * cfg.latent.scale;
}

}  // namespace renoise::app
