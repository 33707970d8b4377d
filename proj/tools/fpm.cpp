// fpm: simulate, reconstruct, benchmark, denoise, selftest.
//
// Exit codes: 0 ok, 1 selftest failure, 2 config, 3 I/O, 4 digest mismatch,
// 5 denoiser plugin failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fpm/fpm.hpp"

namespace fs = std::filesystem;
using namespace fpm;

namespace {

enum Exit { kOk = 0, kSelftestFailed = 1, kConfig = 2, kIo = 3, kDigest = 4, kPlugin = 5 };

struct CommonFlags {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  std::optional<double> gamma;
  std::optional<double> lambda;
  std::optional<std::size_t> minibatch;
  std::string mode;
  std::string momentum;
  std::string denoiser;
  std::string plugin_cmd;
};

void add_config_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--preset", f.preset, "base preset when no config file names one")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--seed", f.seed, "noise seed (simulate), solver seed (reconstruct), experiment seed (benchmark)");
}

void add_solver_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--iterations", f.iterations)->check(CLI::PositiveNumber);
  cmd->add_option("--gamma", f.gamma, "step size")->check(CLI::PositiveNumber);
  cmd->add_option("--lambda", f.lambda, "prior strength; sigma = sqrt(gamma lambda)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--minibatch", f.minibatch, "online minibatch size B")->check(CLI::PositiveNumber);
  cmd->add_option("--mode", f.mode)->check(CLI::IsMember({"batch", "online"}));
  cmd->add_option("--momentum", f.momentum)->check(CLI::IsMember({"ista", "fista"}));
}

void add_denoiser_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--denoiser", f.denoiser)->check(CLI::IsMember({"none", "tv", "nlm", "external"}));
  cmd->add_option("--plugin-cmd", f.plugin_cmd, "external denoiser shell command; {sigma} is substituted");
}

Config load(const CommonFlags& f) {
  const std::string preset = f.preset.empty() ? "desk" : f.preset;
  Config c = f.config_path.empty() ? preset_config(preset) : load_config(f.config_path, preset);
  if (!f.config_path.empty() && !f.preset.empty() && c.preset != f.preset)
    throw ConfigError("--preset " + f.preset + " conflicts with preset '" + c.preset + "' in " + f.config_path);
  return c;
}

void apply_denoiser_flags(const CommonFlags& f, DenoiserSpec& d) {
  if (f.denoiser == "none") d.kind = DenoiserKind::identity;
  if (f.denoiser == "tv") d.kind = DenoiserKind::tv;
  if (f.denoiser == "nlm") d.kind = DenoiserKind::nlm;
  if (f.denoiser == "external") d.kind = DenoiserKind::external;
  if (!f.plugin_cmd.empty()) {
    d.command = f.plugin_cmd;
    if (f.denoiser.empty()) d.kind = DenoiserKind::external;
  }
  try {
    d.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

void apply_solver_flags(const CommonFlags& f, Config& c) {
  if (f.seed) c.solver.seed = *f.seed;
  if (f.iterations) c.solver.iterations = *f.iterations;
  if (f.gamma) c.solver.gamma = *f.gamma;
  if (f.lambda) c.solver.lambda = *f.lambda;
  if (f.minibatch) c.solver.minibatch = *f.minibatch;
  if (f.mode == "batch") c.solver.mode = SolverMode::batch;
  if (f.mode == "online") c.solver.mode = SolverMode::online;
  if (f.momentum == "ista") c.solver.momentum = Momentum::ista;
  if (f.momentum == "fista") c.solver.momentum = Momentum::fista;
  apply_denoiser_flags(f, c.denoiser);
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_extension();
  return out.string() + suffix;
}

int cmd_simulate(const CommonFlags& f, const std::string& phantom, std::optional<double> snr, const fs::path& out,
                 fs::path truth_path) {
  Config c = load(f);
  if (f.seed) c.noise.seed = *f.seed;
  if (snr) c.noise.input_snr_db = *snr;
  const FpmOperator op = FpmOperator::from_geometry(c.geometry, c.selection, c.workers);
  const PhaseObject truth = make_phantom({phantom.empty() ? c.experiment.phantoms.front().source : phantom, c.phase_scale},
                                         c.geometry.object, c.base_dir);
  const MeasurementStack clean = op.forward_intensity(truth);
  const MeasurementStack noisy = add_awgn(clean, c.noise);
  if (truth_path.empty()) truth_path = with_suffix(out, ".truth.fpmimg");
  write_stack(out, noisy);
  write_image(truth_path, truth);
  std::cout << "J = " << op.num_components() << "\n"
            << "object grid = " << c.geometry.object.n1 << " x " << c.geometry.object.n2 << "\n"
            << "camera grid = " << c.geometry.camera.m1 << " x " << c.geometry.camera.m2 << "\n"
            << "realized input SNR = " << fmt("%.4f", realized_input_snr_db(clean, noisy)) << " dB\n"
            << "stack = " << out.string() << "\n"
            << "ground truth = " << truth_path.string() << "\n";
  return kOk;
}

int cmd_reconstruct(const CommonFlags& f, const fs::path& stack_path, const fs::path& out, const fs::path& truth_path,
                    fs::path csv_path, bool override_digest) {
  Config c = load(f);
  apply_solver_flags(f, c);
  const FpmOperator op = FpmOperator::from_geometry(c.geometry, c.selection, c.workers);
  MeasurementStack y = read_stack(stack_path);
  if (y.size() != op.num_components())
    throw ConfigError("stack has " + std::to_string(y.size()) + " frames but the plan has " +
                      std::to_string(op.num_components()) + " LEDs");
  if (override_digest && y.plan_digest != plan_digest(op.plan())) {
    std::cerr << "warning: stack digest does not match the plan; continuing because of --override-digest\n";
    y.plan_digest = plan_digest(op.plan());
  }
  std::optional<PhaseObject> truth;
  if (!truth_path.empty()) truth = read_real_image(truth_path);
  try {
    validate(c.solver, op.num_components());
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }

  ReconstructionReport report = run_pnp(c.solver, {op, y, {}}, c.denoiser, truth ? &*truth : nullptr);

  write_image(out, report.final_x);
  const auto [lo, hi] = write_pgm16(with_suffix(out, ".pgm"), report.final_x);
  write_file_atomic(with_suffix(out, ".pgm.txt"),
                    "min " + detail::format_double(lo) + "\nmax " + detail::format_double(hi) + "\n");
  if (csv_path.empty()) csv_path = with_suffix(out, ".csv");
  const std::string label = std::string(to_string(c.solver.mode)) + "-" + to_string(c.denoiser.kind);
  const std::string phantom = truth ? fs::path(truth_path).stem().string() : std::string("-");
  const std::size_t B = c.solver.mode == SolverMode::online ? c.solver.minibatch
                                                            : c.solver.batch_subset.value_or(op.all_indices()).size();
  std::string csv = std::string(kCsvHeader) + "\n";
  double cum = 0.0;
  for (const auto& row : report.rows) {
    cum += row.wall_time_s;
    csv += "reconstruct," + detail::csv_field(label) + "," + detail::csv_field(phantom) + "," +
           to_string(c.solver.mode) + "," + to_string(c.solver.momentum) + "," + to_string(c.denoiser.kind) + "," +
           std::to_string(B) + "," + detail::format_double(c.solver.gamma) + "," +
           detail::format_double(c.solver.lambda) + "," + std::to_string(c.solver.seed) + "," +
           std::to_string(row.k) + "," + detail::format_double(row.snr_db) + "," +
           detail::format_double(row.fidelity_full) + "," + detail::format_double(cum) + ",ok\n";
  }
  write_file_atomic(csv_path, csv);

  const auto& last = report.rows.back();
  std::cout << "iterations = " << report.rows.size() << "\n";
  if (!std::isnan(last.fidelity_full))
    std::cout << "data fidelity = " << fmt("%.6e", last.fidelity_full) << " (initial "
              << fmt("%.6e", report.initial_fidelity) << ")\n";
  if (truth) std::cout << "final SNR = " << fmt("%.4f", last.snr_db) << " dB\n";
  std::cout << "mean iteration time = " << fmt("%.6f", cum / report.rows.size()) << " s\n"
            << "image = " << out.string() << "\n"
            << "metrics = " << csv_path.string() << "\n";
  return kOk;
}

int cmd_benchmark(const CommonFlags& f, const fs::path& out_dir) {
  Config c = load(f);
  ExperimentSpec spec = c.experiment_spec();
  spec.output_dir = out_dir;
  if (f.seed) spec.seed = *f.seed;
  for (auto& a : spec.algorithms) {
    if (f.iterations) a.iterations = *f.iterations;
    if (f.gamma) a.gammas = {*f.gamma};
    if (f.lambda && a.denoiser.kind != DenoiserKind::identity) a.lambdas = {*f.lambda};
    if (f.minibatch && a.minibatch != 0 && !a.batch_subset) a.minibatch = *f.minibatch;
  }
  try {
    validate(spec);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  const ExperimentResult result = run_experiment(spec, [](const RunResult& r) {
    std::cerr << r.label << " gamma=" << detail::format_double(r.gamma) << " lambda=" << detail::format_double(r.lambda)
              << " " << r.phantom << ": "
              << (r.ok ? fmt("%.3f dB", r.final_snr_db) : "failed: " + r.error) << "\n";
  });
  std::cout << read_text(result.summary_path) << "metrics = " << result.csv_path.string() << "\n";
  return kOk;
}

int cmd_denoise(const CommonFlags& f, const fs::path& in, const fs::path& out, double sigma) {
  Config c = load(f);
  apply_denoiser_flags(f, c.denoiser);
  const RealImage image = read_real_image(in);
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("--sigma must be finite and >= 0");
  write_image(out, denoise(c.denoiser, {image, sigma}));
  return kOk;
}

int cmd_selftest() {
  bool ok = true;
  for (const auto& r : run_selftest()) {
    std::printf("%-4s %-32s %.3e (limit %.0e, %.2f s) %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.value,
                r.threshold, r.seconds, r.detail.c_str());
    ok = ok && r.passed;
  }
  std::fflush(stdout);
  return ok ? kOk : kSelftestFailed;
}

int report_plugin(const PluginError& e) {
  std::cerr << "error: " << e.what() << "\n";
  if (!e.stderr_text().empty()) std::cerr << "plugin stderr:\n" << e.stderr_text();
  if (!e.stderr_text().empty() && e.stderr_text().back() != '\n') std::cerr << "\n";
  return kPlugin;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fourier ptychography with plug-and-play priors"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* sim = app.add_subcommand("simulate", "write a measurement stack and its ground truth");
  std::string phantom, sim_out, sim_truth;
  std::optional<double> snr;
  add_config_flags(sim, flags);
  sim->add_option("--phantom", phantom, "builtin (ramp, checkerboard, disk, shepp-logan) or image path");
  sim->add_option("--snr", snr, "input SNR in dB (overrides the config)");
  sim->add_option("--out", sim_out, "stack file")->required();
  sim->add_option("--truth-out", sim_truth, "ground-truth FPMIMG (default <out>.truth.fpmimg)");

  auto* rec = app.add_subcommand("reconstruct", "run PnP-FISTA or PnP-SGD on a stack");
  std::string rec_stack, rec_out, rec_truth, rec_csv;
  bool override_digest = false;
  add_config_flags(rec, flags);
  add_solver_flags(rec, flags);
  add_denoiser_flags(rec, flags);
  rec->add_option("--stack", rec_stack)->required()->check(CLI::ExistingFile);
  rec->add_option("--out", rec_out, "reconstruction FPMIMG")->required();
  rec->add_option("--truth", rec_truth, "ground truth FPMIMG for SNR")->check(CLI::ExistingFile);
  rec->add_option("--csv", rec_csv, "per-iteration metrics (default <out>.csv)");
  rec->add_flag("--override-digest", override_digest, "accept a stack whose plan digest differs");

  auto* bench = app.add_subcommand("benchmark", "run the experiment grid of a config");
  std::string bench_out;
  add_config_flags(bench, flags);
  bench->add_option("--iterations", flags.iterations)->check(CLI::PositiveNumber);
  bench->add_option("--gamma", flags.gamma, "replace every gamma grid by one value")->check(CLI::PositiveNumber);
  bench->add_option("--lambda", flags.lambda, "replace every lambda grid by one value")->check(CLI::NonNegativeNumber);
  bench->add_option("--minibatch", flags.minibatch, "replace B of subset-size algorithms")->check(CLI::PositiveNumber);
  bench->add_option("--out", bench_out, "output directory")->required();

  auto* den = app.add_subcommand("denoise", "apply a denoiser to one FPMIMG");
  std::string den_in, den_out;
  double sigma = 0.0;
  add_config_flags(den, flags);
  add_denoiser_flags(den, flags);
  den->add_option("--in", den_in)->required()->check(CLI::ExistingFile);
  den->add_option("--out", den_out)->required();
  den->add_option("--sigma", sigma)->required();

  auto* self = app.add_subcommand("selftest", "adjoint, gradient, TV and reduction checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*sim) return cmd_simulate(flags, phantom, snr, sim_out, sim_truth);
    if (*rec) return cmd_reconstruct(flags, rec_stack, rec_out, rec_truth, rec_csv, override_digest);
    if (*bench) return cmd_benchmark(flags, bench_out);
    if (*den) return cmd_denoise(flags, den_in, den_out, sigma);
    if (*self) return cmd_selftest();
  } catch (const SolverAborted& e) {
    if (e.cause()) {
      try {
        std::rethrow_exception(e.cause());
      } catch (const PluginError& p) {
        return report_plugin(p);
      } catch (...) {
      }
    }
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const PluginError& e) {
    return report_plugin(e);
  } catch (const DigestMismatch& e) {
    std::cerr << "error: " << e.what() << " (use --override-digest to proceed anyway)\n";
    return kDigest;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  }
  return kConfig;
}
