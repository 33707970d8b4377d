#include <gtest/gtest.h>

#include <filesystem>
#include <unistd.h>

#include "fpm/config.hpp"

using namespace fpm;
using nlohmann::json;

namespace {

Config parse(const std::string& text, const std::filesystem::path& base = "/cfg") {
  return parse_config(json::parse(text), base);
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Presets, DeskAndPaper) {
  const auto desk = preset_config("desk");
  EXPECT_EQ(desk.geometry, desk_geometry());
  EXPECT_EQ(plan_illumination(desk.geometry, desk.selection).size(), 37u);
  EXPECT_EQ(desk.solver.minibatch, 8u);
  EXPECT_EQ(desk.noise.input_snr_db, 40.0);
  EXPECT_EQ(desk.experiment.algorithms.size(), 4u);
  EXPECT_EQ(desk.experiment.phantoms.size(), 3u);

  const auto paper = preset_config("paper");
  EXPECT_EQ(paper.geometry, paper_geometry());
  EXPECT_EQ(plan_illumination(paper.geometry, paper.selection).size(), 293u);
  EXPECT_EQ(paper.solver.minibatch, 60u);

  EXPECT_THROW(preset_config("lab"), ConfigError);
}

TEST(Presets, BenchmarkGrid) {
  const auto algos = benchmark_algorithms(8, 300);
  ASSERT_EQ(algos.size(), 4u);
  EXPECT_EQ(algos[0].label, "NoReg-Batch");
  EXPECT_EQ(algos[0].mode, SolverMode::batch);
  EXPECT_EQ(algos[0].minibatch, 8u);
  EXPECT_EQ(algos[0].lambdas, std::vector<double>{0.0});
  EXPECT_EQ(algos[2].label, "TV-Online");
  EXPECT_EQ(algos[2].denoiser.kind, DenoiserKind::tv);
  EXPECT_EQ(algos[2].lambdas, benchmark_lambdas());
  EXPECT_EQ(algos[3].minibatch, 0u);
  for (const auto& a : algos) {
    EXPECT_EQ(a.gammas, benchmark_gammas());
    EXPECT_EQ(a.momentum, Momentum::fista);
    EXPECT_EQ(a.iterations, 300);
  }
}

TEST(Config, OverridesOnTopOfPreset) {
  const auto c = parse(R"({
    "preset": "desk",
    "geometry": {"na_objective": 0.15, "object": {"n1": 96, "n2": 96}},
    "plan": {"count": 21},
    "noise": {"input_snr_db": "inf", "seed": 9},
    "solver": {"mode": "batch", "momentum": "ista", "gamma": 0.04, "lambda": 0.01,
               "batch_subset": [0, 2], "iterations": 12, "seed": 5, "workers": 2,
               "sampling": "without_replacement_epoch", "record_full_fidelity": false},
    "denoiser": {"kind": "nlm", "patch_radius": 2}
  })");
  EXPECT_EQ(c.geometry.na_objective, 0.15);
  EXPECT_EQ(c.geometry.object.n1, 96);
  EXPECT_EQ(c.geometry.object.pixel_pitch, 0.5e-6);
  EXPECT_EQ(c.geometry.led_rows, 7);
  EXPECT_EQ(std::get<std::size_t>(c.selection.choice), 21u);
  EXPECT_TRUE(std::isinf(c.noise.input_snr_db));
  EXPECT_EQ(c.noise.seed, 9u);
  EXPECT_EQ(c.solver.mode, SolverMode::batch);
  EXPECT_EQ(c.solver.momentum, Momentum::ista);
  EXPECT_EQ(c.solver.sampling, Sampling::without_replacement_epoch);
  EXPECT_EQ(c.solver.gamma, 0.04);
  EXPECT_EQ(*c.solver.batch_subset, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(c.solver.iterations, 12);
  EXPECT_FALSE(c.solver.record_full_fidelity);
  EXPECT_EQ(c.workers, 2);
  EXPECT_EQ(c.denoiser.kind, DenoiserKind::nlm);
  EXPECT_EQ(c.denoiser.patch_radius, 2);
}

TEST(Config, ExplicitLedList) {
  const auto c = parse(R"({"plan": {"leds": [[3, 3], [2, 3]]}})");
  const auto& leds = std::get<std::vector<LedIndex>>(c.selection.choice);
  EXPECT_EQ(leds, (std::vector<LedIndex>{{3, 3}, {2, 3}}));
  EXPECT_NE(error_of(R"({"plan": {"leds": [[3, 3, 1]]}})").find("plan.leds[0]"), std::string::npos);
  EXPECT_NE(error_of(R"({"plan": {"count": 3, "leds": [[3, 3]]}})"), "");
}

TEST(Config, UnknownKeysNameTheirPath) {
  EXPECT_NE(error_of(R"({"solvr": {}})").find("'solvr'"), std::string::npos);
  EXPECT_NE(error_of(R"({"solver": {"gama": 0.1}})").find("'solver.gama'"), std::string::npos);
  EXPECT_NE(error_of(R"({"geometry": {"object": {"pitch": 1}}})").find("'geometry.object.pitch'"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"experiment": {"algorithms": [{"label": "a", "gamma": [1]}]}})")
                .find("'experiment.algorithms[0].gamma'"),
            std::string::npos);
}

TEST(Config, TypeAndValueErrors) {
  EXPECT_NE(error_of(R"({"solver": {"gamma": "big"}})").find("solver.gamma"), std::string::npos);
  EXPECT_NE(error_of(R"({"solver": {"iterations": 1.5}})").find("solver.iterations"), std::string::npos);
  EXPECT_NE(error_of(R"({"solver": {"mode": "sideways"}})").find("solver.mode"), std::string::npos);
  EXPECT_NE(error_of(R"({"denoiser": {"kind": "bm3d"}})").find("denoiser.kind"), std::string::npos);
  EXPECT_NE(error_of(R"({"geometry": {"wavelength_m": 513}})"), "");
  EXPECT_NE(error_of(R"({"solver": {"workers": 0}})"), "");
  EXPECT_NE(error_of(R"({"preset": "lab"})"), "");
  EXPECT_NE(error_of(R"([1, 2])"), "");
}

TEST(Config, ExperimentSection) {
  const auto c = parse(R"({
    "experiment": {
      "id": "mini", "seed": 3, "phase_scale": 2.0,
      "phantoms": ["disk", {"source": "img/cell.pgm", "phase_scale": 0.5}],
      "algorithms": [
        {"label": "TV-Online", "mode": "online", "minibatch": 4, "gammas": [0.1], "lambdas": [0.01, 0.02],
         "iterations": 7, "denoiser": {"kind": "tv", "inner_iterations": 20}},
        {"label": "Plugin", "mode": "batch", "denoiser": {"kind": "external", "command": "bin/den --s {sigma}",
                                                          "timeout_s": 1.5}}
      ]
    }
  })",
                       "/work/cfg");
  const auto e = c.experiment_spec();
  EXPECT_EQ(e.id, "mini");
  EXPECT_EQ(e.seed, 3u);
  ASSERT_EQ(e.phantoms.size(), 2u);
  EXPECT_EQ(e.phantoms[0].source, "disk");
  EXPECT_EQ(e.phantoms[0].phase_scale, 2.0);
  EXPECT_EQ(e.phantoms[1].phase_scale, 0.5);
  EXPECT_EQ(e.base_dir, "/work/cfg");
  ASSERT_EQ(e.algorithms.size(), 2u);
  EXPECT_EQ(e.algorithms[0].lambdas, (std::vector<double>{0.01, 0.02}));
  EXPECT_EQ(e.algorithms[0].denoiser.inner_iterations, 20);
  EXPECT_EQ(e.algorithms[1].denoiser.command, "/work/cfg/bin/den --s {sigma}");
  EXPECT_EQ(e.algorithms[1].denoiser.timeout, std::chrono::milliseconds(1500));
  EXPECT_NE(error_of(R"({"experiment": {"algorithms": [{"mode": "batch"}]}})").find("label"), std::string::npos);
}

TEST(Config, PhaseScaleAppliesToPresetPhantoms) {
  const auto c = parse(R"({"experiment": {"phase_scale": 3.0}})");
  for (const auto& p : c.experiment.phantoms) EXPECT_EQ(p.phase_scale, 3.0);
}

TEST(Config, CommandResolution) {
  using detail::resolve_command;
  EXPECT_EQ(resolve_command("./den {sigma}", "/a/b"), "/a/b/den {sigma}");
  EXPECT_EQ(resolve_command("tools/den", "/a/b"), "/a/b/tools/den");
  EXPECT_EQ(resolve_command("/usr/bin/den x", "/a/b"), "/usr/bin/den x");
  EXPECT_EQ(resolve_command("python3 den.py", "/a/b"), "python3 den.py");
  EXPECT_EQ(resolve_command("./den", ""), "./den");
}

TEST(Config, LoadFromFile) {
  const auto dir = std::filesystem::temp_directory_path() / ("fpm_cfg_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "c.json", std::string(R"({"preset": "paper", "solver": {"minibatch": 30}})"));
  const auto c = load_config(dir / "c.json");
  EXPECT_EQ(c.preset, "paper");
  EXPECT_EQ(c.solver.minibatch, 30u);
  EXPECT_EQ(c.base_dir, dir);
  write_file_atomic(dir / "bad.json", std::string("{\"solver\": "));
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
  EXPECT_THROW(load_config(dir / "missing.json"), IoError);
  std::filesystem::remove_all(dir);
}
