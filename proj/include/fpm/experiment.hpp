#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fpm/forward.hpp"
#include "fpm/illumination.hpp"
#include "fpm/image_io.hpp"
#include "fpm/pnp.hpp"
#include "fpm/sim.hpp"

namespace fpm {

/// One labelled algorithm and its hyperparameter grid. Every (gamma, lambda)
/// pair is a separate cell.
struct AlgorithmSpec {
  std::string label;
  SolverMode mode = SolverMode::online;
  Momentum momentum = Momentum::fista;
  DenoiserSpec denoiser;
  // Components per iteration; 0 means all. In batch mode without an explicit
  // subset the first `minibatch` plan entries (the central LEDs) are used.
  std::size_t minibatch = 0;
  std::optional<std::vector<std::size_t>> batch_subset;
  std::vector<double> gammas{0.01};
  std::vector<double> lambdas{0.0};
  int iterations = 100;
  Sampling sampling = Sampling::iid_uniform;
  bool step_decay = false;
};

struct ExperimentSpec {
  std::string id = "experiment";
  SystemGeometry geometry = desk_geometry();
  LedSelection selection = LedSelection::centered(kDeskLedCount);
  std::vector<PhantomSpec> phantoms{PhantomSpec{}};
  NoiseSpec noise;
  std::vector<AlgorithmSpec> algorithms;
  std::uint64_t seed = 0;
  int workers = 1;
  std::filesystem::path output_dir = "out";
  std::filesystem::path base_dir;  // phantom files resolve against this
};

inline constexpr const char* kCsvHeader =
    "experiment_id,label,phantom,mode,momentum,denoiser,B,gamma,lambda,seed,iteration,snr_db,data_fidelity,"
    "cum_wall_time_s,status";

/// Result of one (cell, phantom) run.
struct RunResult {
  std::string label;
  std::size_t cell = 0;
  std::string phantom;
  double gamma = 0.0;
  double lambda = 0.0;
  std::size_t batch = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  int iterations_done = 0;
  double final_snr_db = std::numeric_limits<double>::quiet_NaN();
  double final_fidelity = std::numeric_limits<double>::quiet_NaN();
  double mean_iteration_time_s = std::numeric_limits<double>::quiet_NaN();
  std::filesystem::path image_path;
};

/// Best cell of one label, ranked by the mean final SNR over phantoms.
struct LabelSummary {
  std::string label;
  std::string mode, momentum, denoiser;
  std::size_t batch = 0;
  bool ok = false;
  double gamma = std::numeric_limits<double>::quiet_NaN();
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double mean_final_snr_db = std::numeric_limits<double>::quiet_NaN();
  double mean_iteration_time_s = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<std::string, double>> per_phantom_snr_db;
};

struct ExperimentResult {
  std::vector<RunResult> runs;
  std::vector<LabelSummary> summaries;
  std::filesystem::path csv_path;
  std::filesystem::path summary_path;

  const LabelSummary& summary(const std::string& label) const {
    for (const auto& s : summaries)
      if (s.label == label) return s;
    throw InvalidArgument("no summary for label '" + label + "'");
  }
};

namespace detail {

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string file_token(std::string s) {
  for (auto& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.') c = '_';
  return s;
}

inline std::string phantom_name(const PhantomSpec& p) {
  if (is_builtin_phantom(p.source)) return p.source;
  return std::filesystem::path(p.source).stem().string();
}

inline std::vector<std::size_t> effective_subset(const AlgorithmSpec& a, std::size_t J) {
  if (a.batch_subset) return *a.batch_subset;
  const std::size_t n = a.minibatch == 0 ? J : a.minibatch;
  require(n <= J, "experiment '" + a.label + "': B = " + std::to_string(n) + " exceeds J = " + std::to_string(J));
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

}  // namespace detail

inline void validate(const ExperimentSpec& spec) {
  using detail::require;
  spec.geometry.validate();
  require(!spec.phantoms.empty(), "experiment: no phantoms");
  require(!spec.algorithms.empty(), "experiment: algorithm grid is empty");
  std::set<std::string> labels;
  for (const auto& a : spec.algorithms) {
    require(!a.label.empty(), "experiment: algorithm without a label");
    require(labels.insert(a.label).second, "experiment: duplicate label '" + a.label + "'");
    require(!a.gammas.empty(), "experiment '" + a.label + "': empty gamma list");
    require(!a.lambdas.empty(), "experiment '" + a.label + "': empty lambda list");
    require(a.iterations >= 1, "experiment '" + a.label + "': iterations must be >= 1");
    a.denoiser.validate();
  }
  std::set<std::string> names;
  for (const auto& p : spec.phantoms)
    require(names.insert(detail::phantom_name(p)).second, "experiment: duplicate phantom '" + p.source + "'");
}

using RunCallback = std::function<void(const RunResult&)>;

/// Runs every (algorithm, gamma, lambda) cell on every phantom.
///
/// Writes <out>/metrics.csv (one row per iteration plus one summary row per
/// run; in summary rows cum_wall_time_s holds the mean per-iteration time),
/// <out>/summary.txt and per-run reconstructions under <out>/runs/. A failed
/// run is recorded with status "failed: ..." and the experiment continues.
inline ExperimentResult run_experiment(const ExperimentSpec& spec, const RunCallback& on_run = {}) {
  validate(spec);
  const FpmOperator op = FpmOperator::from_geometry(spec.geometry, spec.selection, spec.workers);
  const std::size_t J = op.num_components();

  std::vector<std::string> names;
  std::vector<PhaseObject> truths;
  std::vector<MeasurementStack> stacks;
  for (std::size_t p = 0; p < spec.phantoms.size(); ++p) {
    names.push_back(detail::phantom_name(spec.phantoms[p]));
    truths.push_back(make_phantom(spec.phantoms[p], spec.geometry.object, spec.base_dir));
    // Same noise realization for every algorithm on a given phantom.
    NoiseSpec noise = spec.noise;
    noise.seed = derive_seed(spec.noise.seed, kStreamNoise, p);
    stacks.push_back(add_awgn(op.forward_intensity(truths.back()), noise));
  }

  std::error_code ec;
  std::filesystem::create_directories(spec.output_dir / "runs", ec);
  if (ec) throw IoError("cannot create " + (spec.output_dir / "runs").string() + ": " + ec.message());

  ExperimentResult result;
  result.csv_path = spec.output_dir / "metrics.csv";
  result.summary_path = spec.output_dir / "summary.txt";
  std::string csv = std::string(kCsvHeader) + "\n";

  std::size_t cell = 0;
  for (const auto& algo : spec.algorithms) {
    const std::vector<std::size_t> subset = detail::effective_subset(algo, J);
    const std::size_t B = subset.size();
    for (double gamma : algo.gammas) {
      for (double lambda : algo.lambdas) {
        const std::uint64_t seed = derive_seed(spec.seed, kStreamCell, cell);
        SolverConfig config;
        config.mode = algo.mode;
        config.momentum = algo.momentum;
        config.gamma = gamma;
        config.lambda = lambda;
        config.iterations = algo.iterations;
        config.seed = seed;
        config.sampling = algo.sampling;
        config.step_decay = algo.step_decay;
        if (algo.mode == SolverMode::online) {
          config.minibatch = B;
        } else {
          config.batch_subset = subset;
        }

        for (std::size_t p = 0; p < truths.size(); ++p) {
          RunResult run;
          run.label = algo.label;
          run.cell = cell;
          run.phantom = names[p];
          run.gamma = gamma;
          run.lambda = lambda;
          run.batch = B;
          run.seed = seed;

          const std::string prefix = detail::csv_field(spec.id) + "," + detail::csv_field(algo.label) + "," +
                                     detail::csv_field(names[p]) + "," + to_string(algo.mode) + "," +
                                     to_string(algo.momentum) + "," + to_string(algo.denoiser.kind) + "," +
                                     std::to_string(B) + "," + detail::format_double(gamma) + "," +
                                     detail::format_double(lambda) + "," + std::to_string(seed) + ",";
          ReconstructionReport report;
          try {
            report = run_pnp(config, {op, stacks[p], {}}, algo.denoiser, &truths[p]);
            run.ok = true;
          } catch (const SolverAborted& e) {
            report = e.partial_report();
            run.error = e.what();
          } catch (const std::exception& e) {
            run.error = e.what();
          }

          double cum = 0.0;
          for (const auto& row : report.rows) {
            cum += row.wall_time_s;
            csv += prefix + std::to_string(row.k) + "," + detail::format_double(row.snr_db) + "," +
                   detail::format_double(row.fidelity_full) + "," + detail::format_double(cum) + ",ok\n";
          }
          run.iterations_done = static_cast<int>(report.rows.size());
          if (!report.rows.empty()) {
            run.final_snr_db = report.rows.back().snr_db;
            run.final_fidelity = report.rows.back().fidelity_full;
            run.mean_iteration_time_s = cum / static_cast<double>(report.rows.size());
          }
          if (!report.final_x.empty()) {
            const std::string stem = detail::file_token(algo.label) + "_g" + detail::file_token(detail::format_double(gamma)) +
                                     "_l" + detail::file_token(detail::format_double(lambda)) + "_" +
                                     detail::file_token(names[p]);
            run.image_path = spec.output_dir / "runs" / (stem + ".fpmimg");
            write_image(run.image_path, report.final_x);
            const auto [lo, hi] = write_pgm16(spec.output_dir / "runs" / (stem + ".pgm"), report.final_x);
            write_file_atomic(spec.output_dir / "runs" / (stem + ".pgm.txt"),
                              "min " + detail::format_double(lo) + "\nmax " + detail::format_double(hi) + "\n");
          }
          csv += prefix + std::to_string(run.iterations_done) + "," + detail::format_double(run.final_snr_db) + "," +
                 detail::format_double(run.final_fidelity) + "," + detail::format_double(run.mean_iteration_time_s) +
                 "," + (run.ok ? std::string("summary") : detail::csv_field("failed: " + run.error)) + "\n";
          write_file_atomic(result.csv_path, csv);
          if (on_run) on_run(run);
          result.runs.push_back(std::move(run));
        }
        ++cell;
      }
    }
  }

  for (const auto& algo : spec.algorithms) {
    LabelSummary best;
    best.label = algo.label;
    best.mode = to_string(algo.mode);
    best.momentum = to_string(algo.momentum);
    best.denoiser = to_string(algo.denoiser.kind);
    best.batch = detail::effective_subset(algo, J).size();
    std::map<std::size_t, std::vector<const RunResult*>> cells;
    for (const auto& r : result.runs)
      if (r.label == algo.label) cells[r.cell].push_back(&r);
    for (const auto& [c, runs] : cells) {
      const bool all_ok = std::all_of(runs.begin(), runs.end(), [](const RunResult* r) { return r->ok; });
      if (!all_ok) continue;
      double snr = 0.0, time = 0.0;
      for (const auto* r : runs) {
        snr += r->final_snr_db;
        time += r->mean_iteration_time_s;
      }
      snr /= static_cast<double>(runs.size());
      time /= static_cast<double>(runs.size());
      if (!best.ok || snr > best.mean_final_snr_db) {
        best.ok = true;
        best.gamma = runs.front()->gamma;
        best.lambda = runs.front()->lambda;
        best.mean_final_snr_db = snr;
        best.mean_iteration_time_s = time;
        best.per_phantom_snr_db.clear();
        for (const auto* r : runs) best.per_phantom_snr_db.emplace_back(r->phantom, r->final_snr_db);
      }
    }
    result.summaries.push_back(std::move(best));
  }

  std::string table;
  char line[512];
  std::snprintf(line, sizeof line, "%-16s %-7s %-6s %-9s %4s %10s %10s %14s %16s\n", "label", "mode", "mom",
                "denoiser", "B", "gamma", "lambda", "mean_snr_db", "mean_iter_s");
  table += line;
  for (const auto& s : result.summaries) {
    if (s.ok) {
      std::snprintf(line, sizeof line, "%-16s %-7s %-6s %-9s %4zu %10.4g %10.4g %14.3f %16.6f\n", s.label.c_str(),
                    s.mode.c_str(), s.momentum.c_str(), s.denoiser.c_str(), s.batch, s.gamma, s.lambda,
                    s.mean_final_snr_db, s.mean_iteration_time_s);
    } else {
      std::snprintf(line, sizeof line, "%-16s %-7s %-6s %-9s %4zu %10s %10s %14s %16s\n", s.label.c_str(),
                    s.mode.c_str(), s.momentum.c_str(), s.denoiser.c_str(), s.batch, "-", "-", "all failed", "-");
    }
    table += line;
  }
  table += "\nSNR = 20 log10(||ref|| / ||ref - est||) after removing the mean phase offset, averaged over phantoms.\n";
  write_file_atomic(result.summary_path, table);
  return result;
}

}  // namespace fpm
