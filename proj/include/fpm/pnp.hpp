#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fpm/denoisers.hpp"
#include "fpm/forward.hpp"
#include "fpm/metrics.hpp"
#include "fpm/rng.hpp"

namespace fpm {

enum class SolverMode { batch, online };
enum class Momentum { fista, ista };
enum class Sampling { iid_uniform, without_replacement_epoch };

inline const char* to_string(SolverMode m) { return m == SolverMode::batch ? "batch" : "online"; }
inline const char* to_string(Momentum m) { return m == Momentum::fista ? "fista" : "ista"; }
inline const char* to_string(Sampling s) {
  return s == Sampling::iid_uniform ? "iid_uniform" : "without_replacement_epoch";
}

struct SolverConfig {
  SolverMode mode = SolverMode::online;
  Momentum momentum = Momentum::fista;
  double gamma = 0.01;
  double lambda = 0.0;
  std::size_t minibatch = 1;                       // online mode
  std::optional<std::vector<std::size_t>> batch_subset;  // batch mode; all components if unset
  int iterations = 100;
  std::uint64_t seed = 0;
  Sampling sampling = Sampling::iid_uniform;
  bool step_decay = false;           // online only: gamma_k = gamma / sqrt(k)
  bool record_full_fidelity = true;  // diagnostic d(x^k) over all components
};

/// One PnP iteration's metrics.
struct IterationRecord {
  int k = 0;
  double fidelity_full = std::numeric_limits<double>::quiet_NaN();  // d(x^k), all components
  double fidelity_minibatch = 0.0;  // estimate of d at s^{k-1} over the iteration's index set
  double snr_db = std::numeric_limits<double>::quiet_NaN();
  double wall_time_s = 0.0;  // algorithm time of this iteration, diagnostics excluded
  double gradient_time_s = 0.0;
  double denoise_time_s = 0.0;
  std::vector<std::size_t> minibatch;
};

struct ReconstructionReport {
  PhaseObject final_x;
  double initial_fidelity = std::numeric_limits<double>::quiet_NaN();
  double initial_snr_db = std::numeric_limits<double>::quiet_NaN();
  std::vector<IterationRecord> rows;
};

/// Raised when a run stops early; carries the report up to the failure.
class SolverAborted : public Error {
 public:
  SolverAborted(const std::string& what, ReconstructionReport partial, std::exception_ptr cause = nullptr)
      : Error(what), partial_(std::move(partial)), cause_(std::move(cause)) {}
  const ReconstructionReport& partial_report() const noexcept { return partial_; }
  std::exception_ptr cause() const noexcept { return cause_; }

 private:
  ReconstructionReport partial_;
  std::exception_ptr cause_;
};

/// FISTA momentum: q_k = (1 + sqrt(1 + 4 q_{k-1}^2)) / 2.
inline double momentum_next(double q_prev) {
  detail::require(q_prev >= 1.0, "momentum_next: q must be >= 1");
  return 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * q_prev * q_prev));
}

/// Minibatch index sets as a pure function of (seed, iteration).
///
/// iid_uniform draws B indices with replacement. without_replacement_epoch
/// walks a concatenation of per-epoch permutations, B positions per iteration,
/// so a minibatch may straddle two epochs.
class MinibatchSampler {
 public:
  MinibatchSampler(std::size_t count, std::size_t batch, Sampling sampling, std::uint64_t seed)
      : count_(count), batch_(batch), sampling_(sampling), seed_(seed) {
    detail::require(count >= 1, "sample_minibatch: J must be >= 1");
    detail::require(batch >= 1 && batch <= count, "sample_minibatch: B must lie in [1, J]");
  }

  /// Indices for iteration k (k >= 1), in draw order.
  std::vector<std::size_t> indices(std::uint64_t k) {
    detail::require(k >= 1, "sample_minibatch: iterations are numbered from 1");
    std::vector<std::size_t> out(batch_);
    if (sampling_ == Sampling::iid_uniform) {
      Rng rng(derive_seed(seed_, kStreamMinibatch, k));
      for (auto& j : out) j = static_cast<std::size_t>(rng.below(count_));
      return out;
    }
    const std::uint64_t first = (k - 1) * batch_;
    for (std::size_t b = 0; b < batch_; ++b) {
      const std::uint64_t p = first + b;
      out[b] = permutation(p / count_)[p % count_];
    }
    return out;
  }

 private:
  const std::vector<std::size_t>& permutation(std::uint64_t epoch) {
    auto it = epochs_.find(epoch);
    if (it != epochs_.end()) return it->second;
    if (epochs_.size() > 4) epochs_.erase(epochs_.begin());
    std::vector<std::size_t> perm(count_);
    for (std::size_t j = 0; j < count_; ++j) perm[j] = j;
    Rng rng(derive_seed(seed_, kStreamEpoch, epoch));
    rng.shuffle(perm);
    return epochs_.emplace(epoch, std::move(perm)).first->second;
  }

  std::size_t count_;
  std::size_t batch_;
  Sampling sampling_;
  std::uint64_t seed_;
  std::map<std::uint64_t, std::vector<std::size_t>> epochs_;
};

inline std::vector<std::size_t> sample_minibatch(std::size_t count, std::size_t batch, Sampling sampling,
                                                 std::uint64_t seed, std::uint64_t k) {
  return MinibatchSampler(count, batch, sampling, seed).indices(k);
}

struct PnpProblem {
  const FpmOperator& op;
  const MeasurementStack& y;
  PhaseObject x0;  // empty means the zero phase image
};

/// Called after every iteration with (k, x^k, s^k).
using IterateObserver = std::function<void(int, const PhaseObject&, const PhaseObject&)>;

inline void validate(const SolverConfig& c, std::size_t components) {
  using detail::require;
  require(c.gamma > 0.0 && std::isfinite(c.gamma), "solver: gamma must be positive");
  require(c.lambda >= 0.0 && std::isfinite(c.lambda), "solver: lambda must be nonnegative");
  require(c.iterations >= 1, "solver: iterations must be >= 1");
  if (c.mode == SolverMode::online) {
    require(c.minibatch >= 1 && c.minibatch <= components,
            "solver: minibatch size " + std::to_string(c.minibatch) + " outside [1, " +
                std::to_string(components) + "]");
  }
  if (c.batch_subset) {
    require(!c.batch_subset->empty(), "solver: batch_subset is empty");
    std::set<std::size_t> seen;
    for (std::size_t j : *c.batch_subset) {
      require(j < components, "solver: batch_subset index " + std::to_string(j) + " out of range");
      require(seen.insert(j).second, "solver: batch_subset index " + std::to_string(j) + " repeated");
    }
  }
}

/// Plug-and-play proximal gradient with FISTA/ISTA momentum.
///
///   z^k = s^{k-1} - gamma * grad d(s^{k-1})     (full or minibatch gradient)
///   x^k = denoise_sigma(z^k),  sigma = sqrt(gamma * lambda)
///   s^k = x^k + ((q_{k-1} - 1) / q_k) (x^k - x^{k-1})
///
/// Batch mode uses the same index set every iteration; online mode draws a
/// fresh minibatch. Returns x^K.
inline ReconstructionReport run_pnp(const SolverConfig& config, const PnpProblem& problem,
                                    const DenoiserSpec& denoiser, const PhaseObject* ground_truth = nullptr,
                                    const IterateObserver& observer = {}) {
  using clock = std::chrono::steady_clock;
  const FpmOperator& op = problem.op;
  const std::size_t J = op.num_components();
  validate(config, J);
  denoiser.validate();
  detail::require(problem.y.size() == J, "run_pnp: stack and plan differ in length");
  check_digest(problem.y, op.plan());

  const auto& grid = op.object_grid();
  PhaseObject x_prev = problem.x0.empty() ? PhaseObject(grid.n1, grid.n2) : problem.x0;
  detail::require(x_prev.rows() == grid.n1 && x_prev.cols() == grid.n2, "run_pnp: x0 does not match the object grid");
  if (ground_truth) require_same_shape(*ground_truth, x_prev, "run_pnp ground truth");

  const std::vector<std::size_t> all = op.all_indices();
  const std::vector<std::size_t> batch_set = config.batch_subset.value_or(all);
  MinibatchSampler sampler(J, config.mode == SolverMode::online ? config.minibatch : 1, config.sampling, config.seed);
  const double sigma = sigma_from_step(config.gamma, config.lambda);

  ReconstructionReport report;
  report.rows.reserve(static_cast<std::size_t>(config.iterations));
  if (config.record_full_fidelity) report.initial_fidelity = op.data_fidelity(x_prev, problem.y, all);
  if (ground_truth) report.initial_snr_db = snr_db(*ground_truth, x_prev);

  PhaseObject s = x_prev;
  PhaseObject z(grid.n1, grid.n2);
  double q_prev = 1.0;
  auto abort = [&](const std::string& why, std::exception_ptr cause = nullptr) {
    report.final_x = x_prev;
    throw SolverAborted(why, std::move(report), cause);
  };

  for (int k = 1; k <= config.iterations; ++k) {
    IterationRecord row;
    row.k = k;
    const auto t0 = clock::now();
    row.minibatch = config.mode == SolverMode::online ? sampler.indices(static_cast<std::uint64_t>(k)) : batch_set;
    const auto fg = op.fidelity_and_gradient(s, problem.y, row.minibatch);
    row.fidelity_minibatch = fg.value;
    const double step = config.mode == SolverMode::online && config.step_decay ? config.gamma / std::sqrt(k)
                                                                                : config.gamma;
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = s[i] - step * fg.gradient[i];
    const auto t1 = clock::now();

    PhaseObject x;
    try {
      x = denoise(denoiser, {z, sigma});
    } catch (const std::exception& e) {
      abort(std::string("iteration ") + std::to_string(k) + ": denoiser failed: " + e.what(),
            std::current_exception());
    }
    const auto t2 = clock::now();

    const double q = config.momentum == Momentum::fista ? momentum_next(q_prev) : 1.0;
    const double beta = (q_prev - 1.0) / q;
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = x[i] + beta * (x[i] - x_prev[i]);
    const auto t3 = clock::now();

    if (!all_finite(x) || !all_finite(s)) {
      abort("iteration " + std::to_string(k) + ": non-finite iterate (step size " + std::to_string(step) +
            " too large?)");
    }

    row.gradient_time_s = std::chrono::duration<double>(t1 - t0).count();
    row.denoise_time_s = std::chrono::duration<double>(t2 - t1).count();
    row.wall_time_s = std::chrono::duration<double>(t3 - t0).count();
    if (config.record_full_fidelity) row.fidelity_full = op.data_fidelity(x, problem.y, all);
    if (ground_truth) row.snr_db = snr_db(*ground_truth, x);
    if (observer) observer(k, x, s);

    report.rows.push_back(std::move(row));
    x_prev = std::move(x);
    q_prev = q;
  }
  report.final_x = std::move(x_prev);
  return report;
}

}  // namespace fpm
