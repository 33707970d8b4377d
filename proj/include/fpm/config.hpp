#pragma once

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "fpm/denoisers.hpp"
#include "fpm/experiment.hpp"
#include "fpm/geometry.hpp"
#include "fpm/illumination.hpp"
#include "fpm/image_io.hpp"
#include "fpm/pnp.hpp"
#include "fpm/sim.hpp"

namespace fpm {

/// Everything a command needs, after preset + file + flag overrides.
struct Config {
  std::string preset = "desk";
  SystemGeometry geometry = desk_geometry();
  LedSelection selection = LedSelection::centered(kDeskLedCount);
  NoiseSpec noise;
  SolverConfig solver;
  int workers = 1;
  DenoiserSpec denoiser;
  double phase_scale = 1.0;
  ExperimentSpec experiment;
  std::filesystem::path base_dir;

  /// The experiment with geometry, plan, noise and paths filled in.
  ExperimentSpec experiment_spec() const {
    ExperimentSpec e = experiment;
    e.geometry = geometry;
    e.selection = selection;
    e.noise = noise;
    e.workers = workers;
    e.base_dir = base_dir;
    return e;
  }
};

/// Coarse log grids shared by the desk and paper presets.
inline const std::vector<double>& benchmark_gammas() {
  static const std::vector<double> g{0.02, 0.04, 0.08, 0.16};
  return g;
}
inline const std::vector<double>& benchmark_lambdas() {
  static const std::vector<double> l{0.003, 0.01, 0.03, 0.1};
  return l;
}

/// NoReg-Batch, NoReg-Online, TV-Online and TV-Full with minibatch B out of J.
inline std::vector<AlgorithmSpec> benchmark_algorithms(std::size_t B, int iterations) {
  DenoiserSpec none;
  DenoiserSpec tv;
  tv.kind = DenoiserKind::tv;
  auto make = [&](std::string label, SolverMode mode, const DenoiserSpec& d, std::size_t b, bool sweep_lambda) {
    AlgorithmSpec a;
    a.label = std::move(label);
    a.mode = mode;
    a.momentum = Momentum::fista;
    a.denoiser = d;
    a.minibatch = b;
    a.gammas = benchmark_gammas();
    a.lambdas = sweep_lambda ? benchmark_lambdas() : std::vector<double>{0.0};
    a.iterations = iterations;
    return a;
  };
  return {make("NoReg-Batch", SolverMode::batch, none, B, false),
          make("NoReg-Online", SolverMode::online, none, B, false),
          make("TV-Online", SolverMode::online, tv, B, true),
          make("TV-Full", SolverMode::batch, tv, 0, true)};
}

inline Config preset_config(const std::string& name) {
  Config c;
  c.preset = name;
  c.noise = {40.0, 0};
  c.solver.mode = SolverMode::online;
  c.solver.momentum = Momentum::fista;
  c.solver.gamma = 0.08;
  c.solver.lambda = 0.03;
  c.solver.iterations = 300;
  c.denoiser.kind = DenoiserKind::tv;
  c.experiment.phantoms = {{"shepp-logan", 1.0}, {"disk", 1.0}, {"checkerboard", 1.0}};
  if (name == "desk") {
    c.geometry = desk_geometry();
    c.selection = LedSelection::centered(kDeskLedCount);
    c.solver.minibatch = 8;
    c.experiment.id = "desk-benchmark";
    c.experiment.algorithms = benchmark_algorithms(8, 300);
  } else if (name == "paper") {
    c.geometry = paper_geometry();
    c.selection = LedSelection::centered(kPaperLedCount);
    c.solver.minibatch = 60;
    c.experiment.id = "paper-benchmark";
    c.experiment.algorithms = benchmark_algorithms(60, 300);
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
  }
  return c;
}

namespace detail {

using nlohmann::json;

[[noreturn]] inline void config_fail(const std::string& path, const std::string& what) {
  throw ConfigError("config: " + path + ": " + what);
}

inline void read_value(const json& j, const std::string& path, double& out) {
  if (j.is_number()) {
    out = j.get<double>();
  } else if (j.is_string() && (j.get<std::string>() == "inf" || j.get<std::string>() == "+inf")) {
    out = std::numeric_limits<double>::infinity();
  } else {
    config_fail(path, "expected a number");
  }
}

inline void read_value(const json& j, const std::string& path, int& out) {
  if (!j.is_number_integer()) config_fail(path, "expected an integer");
  const auto v = j.get<long long>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) config_fail(path, "out of range");
  out = static_cast<int>(v);
}

inline void read_value(const json& j, const std::string& path, std::uint64_t& out) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<long long>() < 0))
    config_fail(path, "expected a nonnegative integer");
  out = j.get<std::uint64_t>();
}

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "size_t config values are read as uint64");

inline void read_value(const json& j, const std::string& path, bool& out) {
  if (!j.is_boolean()) config_fail(path, "expected true or false");
  out = j.get<bool>();
}

inline void read_value(const json& j, const std::string& path, std::string& out) {
  if (!j.is_string()) config_fail(path, "expected a string");
  out = j.get<std::string>();
}

template <typename T>
void read_value(const json& j, const std::string& path, std::vector<T>& out) {
  if (!j.is_array()) config_fail(path, "expected an array");
  out.clear();
  for (std::size_t i = 0; i < j.size(); ++i) {
    T v{};
    read_value(j[i], path + "[" + std::to_string(i) + "]", v);
    out.push_back(std::move(v));
  }
}

/// A JSON object whose keys must all be consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) config_fail(path_, "expected an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  template <typename T>
  bool get(const std::string& key, T& out) {
    const json* v = find(key);
    if (!v) return false;
    read_value(*v, key_path(key), out);
    return true;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError("config: unknown key '" + key_path(it.key()) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <typename E>
E parse_enum(const json& j, const std::string& path, std::initializer_list<std::pair<const char*, E>> options) {
  std::string s;
  read_value(j, path, s);
  std::string names;
  for (const auto& [name, value] : options) {
    if (s == name) return value;
    names += names.empty() ? name : std::string(", ") + name;
  }
  config_fail(path, "'" + s + "' is not one of " + names);
}

inline SolverMode parse_mode(const json& j, const std::string& path) {
  return parse_enum<SolverMode>(j, path, {{"batch", SolverMode::batch}, {"online", SolverMode::online}});
}
inline Momentum parse_momentum(const json& j, const std::string& path) {
  return parse_enum<Momentum>(j, path, {{"fista", Momentum::fista}, {"ista", Momentum::ista}});
}
inline Sampling parse_sampling(const json& j, const std::string& path) {
  return parse_enum<Sampling>(j, path, {{"iid_uniform", Sampling::iid_uniform},
                                        {"without_replacement_epoch", Sampling::without_replacement_epoch}});
}
inline DenoiserKind parse_denoiser_kind(const json& j, const std::string& path) {
  return parse_enum<DenoiserKind>(j, path, {{"none", DenoiserKind::identity}, {"tv", DenoiserKind::tv},
                                            {"nlm", DenoiserKind::nlm}, {"external", DenoiserKind::external}});
}

/// A relative program path at the start of a plugin command resolves
/// against the config directory.
inline std::string resolve_command(const std::string& command, const std::filesystem::path& base_dir) {
  if (base_dir.empty()) return command;
  const auto start = command.find_first_not_of(" \t");
  if (start == std::string::npos) return command;
  const auto end = command.find_first_of(" \t", start);
  const std::string program = command.substr(start, end == std::string::npos ? std::string::npos : end - start);
  if (program.find('/') == std::string::npos || program.front() == '/') return command;
  const std::string resolved = (base_dir / program).lexically_normal().string();
  return command.substr(0, start) + resolved + (end == std::string::npos ? "" : command.substr(end));
}

inline void parse_geometry(const json& j, SystemGeometry& g) {
  Section s(j, "geometry");
  s.get("led_rows", g.led_rows);
  s.get("led_cols", g.led_cols);
  s.get("led_pitch_m", g.led_pitch);
  s.get("led_distance_m", g.led_distance);
  s.get("wavelength_m", g.wavelength);
  s.get("na_objective", g.na_objective);
  if (const json* o = s.find("object")) {
    Section os(*o, "geometry.object");
    os.get("n1", g.object.n1);
    os.get("n2", g.object.n2);
    os.get("pixel_pitch_m", g.object.pixel_pitch);
    os.finish();
  }
  if (const json* c = s.find("camera")) {
    Section cs(*c, "geometry.camera");
    cs.get("m1", g.camera.m1);
    cs.get("m2", g.camera.m2);
    cs.finish();
  }
  s.finish();
}

inline void parse_plan(const json& j, LedSelection& sel) {
  Section s(j, "plan");
  const json* count = s.find("count");
  const json* leds = s.find("leds");
  s.finish();
  if (count && leds) config_fail("plan", "give either count or leds, not both");
  if (count) {
    std::size_t n = 0;
    read_value(*count, "plan.count", n);
    sel = LedSelection::centered(n);
  } else if (leds) {
    if (!leds->is_array()) config_fail("plan.leds", "expected an array of [row, col] pairs");
    std::vector<LedIndex> list;
    for (std::size_t i = 0; i < leds->size(); ++i) {
      const std::string p = "plan.leds[" + std::to_string(i) + "]";
      std::vector<int> rc;
      read_value((*leds)[i], p, rc);
      if (rc.size() != 2) config_fail(p, "expected [row, col]");
      list.push_back({rc[0], rc[1]});
    }
    sel = LedSelection::explicit_list(std::move(list));
  }
}

inline void parse_noise(const json& j, NoiseSpec& n) {
  Section s(j, "noise");
  s.get("input_snr_db", n.input_snr_db);
  s.get("seed", n.seed);
  s.finish();
}

inline void parse_solver(const json& j, SolverConfig& c, int& workers) {
  Section s(j, "solver");
  if (const json* v = s.find("mode")) c.mode = parse_mode(*v, "solver.mode");
  if (const json* v = s.find("momentum")) c.momentum = parse_momentum(*v, "solver.momentum");
  if (const json* v = s.find("sampling")) c.sampling = parse_sampling(*v, "solver.sampling");
  s.get("gamma", c.gamma);
  s.get("lambda", c.lambda);
  s.get("minibatch", c.minibatch);
  std::vector<std::size_t> subset;
  if (s.get("batch_subset", subset)) c.batch_subset = subset;
  s.get("iterations", c.iterations);
  s.get("seed", c.seed);
  s.get("step_decay", c.step_decay);
  s.get("record_full_fidelity", c.record_full_fidelity);
  s.get("workers", workers);
  s.finish();
}

inline void parse_denoiser(const json& j, const std::string& path, DenoiserSpec& d,
                           const std::filesystem::path& base_dir) {
  Section s(j, path);
  if (const json* v = s.find("kind")) d.kind = parse_denoiser_kind(*v, path + ".kind");
  s.get("inner_iterations", d.inner_iterations);
  s.get("tolerance", d.tolerance);
  s.get("patch_radius", d.patch_radius);
  s.get("window_radius", d.window_radius);
  s.get("filtering_strength", d.filtering_strength);
  if (s.get("command", d.command)) d.command = resolve_command(d.command, base_dir);
  double timeout_s = 0.0;
  if (s.get("timeout_s", timeout_s)) {
    if (!(timeout_s > 0.0) || !std::isfinite(timeout_s)) config_fail(path + ".timeout_s", "must be positive");
    d.timeout = std::chrono::milliseconds(static_cast<long long>(std::ceil(timeout_s * 1000.0)));
  }
  s.finish();
}

inline AlgorithmSpec parse_algorithm(const json& j, const std::string& path, const std::filesystem::path& base_dir) {
  AlgorithmSpec a;
  Section s(j, path);
  s.get("label", a.label);
  if (const json* v = s.find("mode")) a.mode = parse_mode(*v, path + ".mode");
  if (const json* v = s.find("momentum")) a.momentum = parse_momentum(*v, path + ".momentum");
  if (const json* v = s.find("sampling")) a.sampling = parse_sampling(*v, path + ".sampling");
  if (const json* v = s.find("denoiser")) parse_denoiser(*v, path + ".denoiser", a.denoiser, base_dir);
  s.get("minibatch", a.minibatch);
  std::vector<std::size_t> subset;
  if (s.get("batch_subset", subset)) a.batch_subset = subset;
  s.get("gammas", a.gammas);
  s.get("lambdas", a.lambdas);
  s.get("iterations", a.iterations);
  s.get("step_decay", a.step_decay);
  s.finish();
  if (a.label.empty()) config_fail(path + ".label", "missing");
  return a;
}

inline void parse_experiment(const json& j, Config& c) {
  Section s(j, "experiment");
  s.get("id", c.experiment.id);
  s.get("seed", c.experiment.seed);
  s.get("phase_scale", c.phase_scale);
  if (const json* v = s.find("phantoms")) {
    if (!v->is_array()) config_fail("experiment.phantoms", "expected an array");
    c.experiment.phantoms.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      const std::string p = "experiment.phantoms[" + std::to_string(i) + "]";
      PhantomSpec ph{"", c.phase_scale};
      if ((*v)[i].is_string()) {
        ph.source = (*v)[i].get<std::string>();
      } else {
        Section ps((*v)[i], p);
        ps.get("source", ph.source);
        ps.get("phase_scale", ph.phase_scale);
        ps.finish();
      }
      if (ph.source.empty()) config_fail(p, "missing source");
      c.experiment.phantoms.push_back(ph);
    }
  } else {
    for (auto& ph : c.experiment.phantoms) ph.phase_scale = c.phase_scale;
  }
  if (const json* v = s.find("algorithms")) {
    if (!v->is_array()) config_fail("experiment.algorithms", "expected an array");
    c.experiment.algorithms.clear();
    for (std::size_t i = 0; i < v->size(); ++i)
      c.experiment.algorithms.push_back(
          parse_algorithm((*v)[i], "experiment.algorithms[" + std::to_string(i) + "]", c.base_dir));
  }
  s.finish();
}

}  // namespace detail

/// Parses a config document over its preset (key "preset", default `fallback_preset`).
inline Config parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                           const std::string& fallback_preset = "desk") {
  using detail::Section;
  Section top(doc, "");
  std::string preset = fallback_preset;
  top.get("preset", preset);
  Config c = preset_config(preset);
  c.base_dir = base_dir;
  if (const nlohmann::json* v = top.find("geometry")) detail::parse_geometry(*v, c.geometry);
  if (const nlohmann::json* v = top.find("plan")) detail::parse_plan(*v, c.selection);
  if (const nlohmann::json* v = top.find("noise")) detail::parse_noise(*v, c.noise);
  if (const nlohmann::json* v = top.find("solver")) detail::parse_solver(*v, c.solver, c.workers);
  if (const nlohmann::json* v = top.find("denoiser")) detail::parse_denoiser(*v, "denoiser", c.denoiser, base_dir);
  if (const nlohmann::json* v = top.find("experiment")) detail::parse_experiment(*v, c);
  top.finish();

  try {
    c.geometry.validate();
    detail::require(c.workers >= 1, "solver: workers must be >= 1");
    detail::require(c.phase_scale > 0.0, "experiment: phase_scale must be positive");
    detail::require(!std::isnan(c.noise.input_snr_db) && c.noise.input_snr_db != -std::numeric_limits<double>::infinity(),
                    "noise: input_snr_db must be finite or inf");
    c.denoiser.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

/// Reads a JSON config file; relative paths inside resolve against its directory.
inline Config load_config(const std::filesystem::path& path, const std::string& fallback_preset = "desk") {
  const Bytes bytes = read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_config(doc, std::filesystem::absolute(path).parent_path(), fallback_preset);
}

}  // namespace fpm
