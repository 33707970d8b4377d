#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fpm/denoisers.hpp"
#include "fpm/forward.hpp"
#include "fpm/geometry.hpp"
#include "fpm/pnp.hpp"
#include "fpm/rng.hpp"
#include "fpm/sim.hpp"

namespace fpm {

namespace oracle {

/// argmin_x 1/2 ||x - z||^2 + w TV(x) by ADMM on the split e = Dx, in long
/// double with a dense Cholesky solve. Meant for tiny images only.
inline RealImage tv_prox_admm(const RealImage& z, double w, int iterations = 20000, long double rho = 1.0L) {
  const int n1 = z.rows(), n2 = z.cols();
  const int N = n1 * n2;
  struct Edge {
    int a, b;  // difference x[b] - x[a]
  };
  std::vector<Edge> edges;
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j) {
      if (j + 1 < n2) edges.push_back({i * n2 + j, i * n2 + j + 1});
      if (i + 1 < n1) edges.push_back({i * n2 + j, (i + 1) * n2 + j});
    }
  const int E = static_cast<int>(edges.size());

  // A = I + rho D^T D, factored as L L^T.
  std::vector<long double> L(static_cast<std::size_t>(N) * N, 0.0L);
  for (int i = 0; i < N; ++i) L[i * N + i] = 1.0L;
  for (const auto& e : edges) {
    L[e.a * N + e.a] += rho;
    L[e.b * N + e.b] += rho;
    L[e.a * N + e.b] -= rho;
    L[e.b * N + e.a] -= rho;
  }
  for (int j = 0; j < N; ++j) {
    long double d = L[j * N + j];
    for (int k = 0; k < j; ++k) d -= L[j * N + k] * L[j * N + k];
    L[j * N + j] = std::sqrt(d);
    for (int i = j + 1; i < N; ++i) {
      long double s = L[i * N + j];
      for (int k = 0; k < j; ++k) s -= L[i * N + k] * L[j * N + k];
      L[i * N + j] = s / L[j * N + j];
    }
    for (int i = 0; i < j; ++i) L[i * N + j] = 0.0L;
  }

  std::vector<long double> x(N), e(E, 0.0L), u(E, 0.0L), rhs(N), tmp(N);
  for (int i = 0; i < N; ++i) x[i] = z[i];
  const long double thresh = static_cast<long double>(w) / rho;
  for (int it = 0; it < iterations; ++it) {
    for (int i = 0; i < N; ++i) rhs[i] = z[i];
    for (int k = 0; k < E; ++k) {
      const long double c = rho * (e[k] - u[k]);
      rhs[edges[k].b] += c;
      rhs[edges[k].a] -= c;
    }
    for (int i = 0; i < N; ++i) {
      long double s = rhs[i];
      for (int k = 0; k < i; ++k) s -= L[i * N + k] * tmp[k];
      tmp[i] = s / L[i * N + i];
    }
    for (int i = N - 1; i >= 0; --i) {
      long double s = tmp[i];
      for (int k = i + 1; k < N; ++k) s -= L[k * N + i] * x[k];
      x[i] = s / L[i * N + i];
    }
    for (int k = 0; k < E; ++k) {
      const long double dx = x[edges[k].b] - x[edges[k].a];
      const long double v = dx + u[k];
      e[k] = v > thresh ? v - thresh : (v < -thresh ? v + thresh : 0.0L);
      u[k] += dx - e[k];
    }
  }
  RealImage out(n1, n2);
  for (int i = 0; i < N; ++i) out[i] = static_cast<double>(x[i]);
  return out;
}

/// tv_objective accumulated in long double.
inline long double tv_objective_ld(const RealImage& x, const RealImage& z, double w) {
  long double q = 0.0L, tv = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double d = static_cast<long double>(x[i]) - z[i];
    q += d * d;
  }
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) {
      if (j + 1 < x.cols()) tv += std::abs(static_cast<long double>(x(i, j + 1)) - x(i, j));
      if (i + 1 < x.rows()) tv += std::abs(static_cast<long double>(x(i + 1, j)) - x(i, j));
    }
  return 0.5L * q + static_cast<long double>(w) * tv;
}

}  // namespace oracle

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;      // worst observed error
  double threshold = 0.0;
  double seconds = 0.0;
  std::string detail;
};

/// Replacement for FpmOperator::apply_adjoint, for negative controls.
using AdjointFn = std::function<ComplexField(const FpmOperator&, const ComplexField&, std::size_t)>;

/// 3x3 LEDs over a 32x32 object and 16x16 camera; 5 centered LEDs give
/// shifts of two bins.
inline SystemGeometry small_check_geometry() {
  SystemGeometry g;
  g.led_rows = 3;
  g.led_cols = 3;
  g.led_pitch = 4e-3;
  g.led_distance = 70e-3;
  g.wavelength = 513e-9;
  g.na_objective = 0.2;
  g.object = {32, 32, 0.55e-6};
  g.camera = {16, 16};
  return g;
}

namespace detail {

inline ComplexField random_complex(int n1, int n2, Rng& rng) {
  ComplexField f(n1, n2);
  for (auto& v : f) v = {rng.normal(), rng.normal()};
  return f;
}

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform_open(); }

template <typename Fn>
CheckResult timed(std::string name, double threshold, Fn&& fn) {
  CheckResult r;
  r.name = std::move(name);
  r.threshold = threshold;
  const auto t0 = std::chrono::steady_clock::now();
  fn(r);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace detail

/// A random admissible geometry with a random complex pupil on the disk support.
inline FpmOperator random_operator(Rng& rng) {
  for (;;) {
    SystemGeometry g;
    const int sizes[] = {16, 24, 32, 40, 48};
    g.object.n1 = sizes[rng.below(5)];
    g.object.n2 = sizes[rng.below(5)];
    g.camera.m1 = 2 * static_cast<int>(4 + rng.below(static_cast<std::uint64_t>(g.object.n1 / 4 - 3)));
    g.camera.m2 = 2 * static_cast<int>(4 + rng.below(static_cast<std::uint64_t>(g.object.n2 / 4 - 3)));
    g.led_rows = 3 + static_cast<int>(rng.below(5));
    g.led_cols = 3 + static_cast<int>(rng.below(5));
    g.led_pitch = detail::uniform(rng, 2e-3, 6e-3);
    g.led_distance = detail::uniform(rng, 50e-3, 100e-3);
    g.wavelength = detail::uniform(rng, 450e-9, 650e-9);
    g.na_objective = detail::uniform(rng, 0.1, 0.4);
    // Pupil radius as a fraction of the smaller camera half-width.
    const double frac = detail::uniform(rng, 0.4, 0.9);
    const double r_bins = frac * 0.5 * std::min(g.camera.m1 * 1.0 / g.object.n1, g.camera.m2 * 1.0 / g.object.n2);
    g.object.pixel_pitch = r_bins * g.wavelength / g.na_objective;
    const std::size_t total = static_cast<std::size_t>(g.led_rows) * static_cast<std::size_t>(g.led_cols);
    const std::size_t count = std::min<std::size_t>(total, 3 + rng.below(7));
    try {
      g.validate();
      PupilMask pupil = make_pupil(g);
      for (auto& v : pupil.values)
        if (v != Complex{}) v = std::polar(detail::uniform(rng, 0.2, 1.0), detail::uniform(rng, -3.14, 3.14));
      return FpmOperator(g.object, plan_illumination(g, LedSelection::centered(count)), pupil);
    } catch (const InvalidArgument&) {
      // shifted crop left the spectrum; draw again
    }
  }
}

/// Worst |<H u, v> - <u, H^dagger v>| / max(|<H u, v>|, |<u, H^dagger v>|) over random trials.
inline double max_adjoint_error(const FpmOperator& op, int trials, Rng& rng, const AdjointFn& adjoint = {}) {
  const auto& grid = op.object_grid();
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const std::size_t j = static_cast<std::size_t>(rng.below(op.num_components()));
    const ComplexField u = detail::random_complex(grid.n1, grid.n2, rng);
    const ComplexField v = detail::random_complex(op.camera_rows(), op.camera_cols(), rng);
    const Complex lhs = inner(op.apply(u, j), v);
    const Complex rhs = inner(u, adjoint ? adjoint(op, v, j) : op.apply_adjoint(v, j));
    const double scale = std::max(std::abs(lhs), std::abs(rhs));
    worst = std::max(worst, scale > 0.0 ? std::abs(lhs - rhs) / scale : 0.0);
  }
  return worst;
}

inline CheckResult check_adjoint(int trials = 100, std::uint64_t seed = 1, const AdjointFn& adjoint = {}) {
  return detail::timed("adjoint identity", 1e-10, [&](CheckResult& r) {
    Rng rng(derive_seed(seed, 0x61646a, 0));
    std::vector<FpmOperator> ops;
    ops.push_back(FpmOperator::from_geometry(desk_geometry(), LedSelection::centered(kDeskLedCount)));
    for (int i = 0; i < 3; ++i) ops.push_back(random_operator(rng));
    for (const auto& op : ops) r.value = std::max(r.value, max_adjoint_error(op, trials, rng, adjoint));
    r.passed = r.value < r.threshold;
    r.detail = std::to_string(ops.size()) + " geometries x " + std::to_string(trials) + " trials";
  });
}

/// Central differences of d (step 1e-6) against grad_data at random coordinates.
inline CheckResult check_gradient(int coordinates = 20, std::uint64_t seed = 2) {
  return detail::timed("gradient vs finite differences", 1e-6, [&](CheckResult& r) {
    Rng rng(derive_seed(seed, 0x67726164, 0));
    const SystemGeometry g = small_check_geometry();
    const FpmOperator op = FpmOperator::from_geometry(g, LedSelection::centered(5));
    PhaseObject truth(g.object.n1, g.object.n2), x(g.object.n1, g.object.n2);
    for (auto& v : truth) v = detail::uniform(rng, 0.0, 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = truth[i] + detail::uniform(rng, -0.1, 0.1);
    const MeasurementStack y = op.forward_intensity(truth);
    const auto all = op.all_indices();
    const PhaseObject grad = op.grad_data(x, y, all);
    const double h = 1e-6;
    double err = 0.0, ref = 0.0;
    for (int c = 0; c < coordinates; ++c) {
      const std::size_t i = static_cast<std::size_t>(rng.below(x.size()));
      PhaseObject xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (op.data_fidelity(xp, y, all) - op.data_fidelity(xm, y, all)) / (2.0 * h);
      err += (fd - grad[i]) * (fd - grad[i]);
      ref += grad[i] * grad[i];
    }
    r.value = std::sqrt(err / ref);
    r.passed = r.value < r.threshold;
    r.detail = std::to_string(coordinates) + " coordinates, 32x32 object, 5 LEDs, ||fd - g|| / ||g||";
  });
}

/// TV prox against the long-double ADMM oracle on random 4x4 inputs.
inline CheckResult check_tv_oracle(int instances = 50, std::uint64_t seed = 3) {
  return detail::timed("TV prox vs oracle", 1e-6, [&](CheckResult& r) {
    Rng rng(derive_seed(seed, 0x7476, 0));
    const double weights[] = {0.01, 0.1, 1.0};
    for (int n = 0; n < instances; ++n) {
      RealImage z(4, 4);
      for (auto& v : z) v = detail::uniform(rng, 0.0, 1.0);
      for (double w : weights) {
        const RealImage ours = tv_denoise(z, w, 5000, 1e-15);
        const RealImage ref = oracle::tv_prox_admm(z, w);
        const long double gap = oracle::tv_objective_ld(ours, z, w) - oracle::tv_objective_ld(ref, z, w);
        r.value = std::max(r.value, static_cast<double>(gap));
      }
    }
    r.passed = r.value < r.threshold;
    r.detail = std::to_string(instances) + " instances x 3 weights, objective gap";
  });
}

/// Online with B = J drawn without replacement against batch FISTA on the desk problem.
inline CheckResult check_reduction(int iterations = 50, std::uint64_t seed = 4) {
  return detail::timed("online B=J equals batch", 1e-12, [&](CheckResult& r) {
    const SystemGeometry g = desk_geometry();
    const FpmOperator op = FpmOperator::from_geometry(g, LedSelection::centered(kDeskLedCount));
    const PhaseObject truth = make_phantom({"shepp-logan", 1.0}, g.object);
    const MeasurementStack y = add_awgn(op.forward_intensity(truth), {40.0, seed});
    DenoiserSpec tv;
    tv.kind = DenoiserKind::tv;
    SolverConfig c;
    c.gamma = 0.08;
    c.lambda = 0.01;
    c.iterations = iterations;
    c.seed = seed;
    c.record_full_fidelity = false;
    std::vector<PhaseObject> batch_iterates, online_iterates;
    c.mode = SolverMode::batch;
    run_pnp(c, {op, y, {}}, tv, nullptr, [&](int, const PhaseObject& x, const PhaseObject&) { batch_iterates.push_back(x); });
    c.mode = SolverMode::online;
    c.minibatch = op.num_components();
    c.sampling = Sampling::without_replacement_epoch;
    run_pnp(c, {op, y, {}}, tv, nullptr, [&](int, const PhaseObject& x, const PhaseObject&) { online_iterates.push_back(x); });
    for (std::size_t k = 0; k < batch_iterates.size(); ++k)
      r.value = std::max(r.value, max_abs_diff(batch_iterates[k], online_iterates[k]));
    r.passed = batch_iterates.size() == online_iterates.size() && r.value <= r.threshold;
    r.detail = std::to_string(iterations) + " iterations, max |x_online - x_batch|";
  });
}

inline std::vector<CheckResult> run_selftest() {
  return {check_adjoint(), check_gradient(), check_tv_oracle(), check_reduction()};
}

}  // namespace fpm
