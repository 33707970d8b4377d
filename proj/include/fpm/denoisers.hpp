#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "fpm/array2d.hpp"
#include "fpm/error.hpp"
#include "fpm/image_io.hpp"
#include "fpm/process.hpp"

namespace fpm {

enum class DenoiserKind { identity, tv, nlm, external };

inline const char* to_string(DenoiserKind k) {
  switch (k) {
    case DenoiserKind::identity: return "none";
    case DenoiserKind::tv: return "tv";
    case DenoiserKind::nlm: return "nlm";
    case DenoiserKind::external: return "external";
  }
  return "?";
}

struct DenoiserSpec {
  DenoiserKind kind = DenoiserKind::identity;
  // tv
  int inner_iterations = 50;
  double tolerance = 1e-5;
  // nlm
  int patch_radius = 1;
  int window_radius = 3;
  double filtering_strength = 1.0;
  // external; "{sigma}" is replaced by the noise level
  std::string command;
  std::chrono::milliseconds timeout{std::chrono::seconds(300)};

  void validate() const {
    using detail::require;
    require(inner_iterations >= 1, "denoiser: inner_iterations must be >= 1");
    require(tolerance > 0.0, "denoiser: tolerance must be positive");
    require(patch_radius >= 1 && window_radius >= 1, "denoiser: nlm radii must be >= 1");
    require(filtering_strength > 0.0, "denoiser: filtering_strength must be positive");
    require(kind != DenoiserKind::external || !command.empty(),
            "denoiser: external denoiser needs a command");
    require(timeout.count() > 0, "denoiser: timeout must be positive");
  }
};

struct DenoiseRequest {
  const RealImage& image;
  double sigma = 0.0;
};

/// Denoiser strength tied to the gradient step: sigma = sqrt(gamma * lambda).
inline double sigma_from_step(double gamma, double lambda) {
  detail::require(gamma > 0.0, "sigma_from_step: gamma must be positive");
  detail::require(lambda >= 0.0, "sigma_from_step: lambda must be nonnegative");
  return std::sqrt(gamma * lambda);
}

// ---------------------------------------------------------------------------
// Anisotropic total variation with forward differences; the last row/column
// difference is zero (replicate boundary).

inline double total_variation(const RealImage& x) {
  const int n1 = x.rows(), n2 = x.cols();
  double tv = 0.0;
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j) {
      if (j + 1 < n2) tv += std::abs(x(i, j + 1) - x(i, j));
      if (i + 1 < n1) tv += std::abs(x(i + 1, j) - x(i, j));
    }
  return tv;
}

/// 1/2 ||x - z||^2 + weight * TV(x)
inline double tv_objective(const RealImage& x, const RealImage& z, double weight) {
  require_same_shape(x, z, "tv_objective");
  double q = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) q += (x[i] - z[i]) * (x[i] - z[i]);
  return 0.5 * q + weight * total_variation(x);
}

namespace detail {

// x = z - w * D^T p, with p = (ph, pv) the dual field. Assumes the last column
// of ph and the last row of pv are zero, which the dual update maintains.
inline void tv_primal_from_dual(const RealImage& z, double w, const RealImage& ph, const RealImage& pv,
                                RealImage& x) {
  const int n1 = z.rows(), n2 = z.cols();
  for (int i = 0; i < n1; ++i) {
    const double* zr = &z(i, 0);
    const double* hr = &ph(i, 0);
    const double* vr = &pv(i, 0);
    const double* vu = i > 0 ? &pv(i - 1, 0) : nullptr;
    double* xr = &x(i, 0);
    for (int j = 0; j < n2; ++j) {
      double dt = -hr[j] - vr[j];  // (D^T p)(i, j)
      if (j > 0) dt += hr[j - 1];
      if (vu) dt += vu[j];
      xr[j] = zr[j] - w * dt;
    }
  }
}

// One projected gradient step from r, written to p, then r becomes the
// extrapolated point p + beta (p - p_old).
inline void tv_dual_step(const RealImage& x, double step, double beta, RealImage& ph, RealImage& pv, RealImage& rh,
                         RealImage& rv) {
  const int n1 = x.rows(), n2 = x.cols();
  auto update = [&](double& p, double& r, double g) {
    const double p_new = std::min(1.0, std::max(-1.0, r + step * g));
    r = p_new + beta * (p_new - p);
    p = p_new;
  };
  for (int i = 0; i < n1; ++i) {
    const double* xr = &x(i, 0);
    const double* xd = i + 1 < n1 ? &x(i + 1, 0) : nullptr;
    double* hr = &ph(i, 0);
    double* vr = &pv(i, 0);
    double* rhr = &rh(i, 0);
    double* rvr = &rv(i, 0);
    for (int j = 0; j + 1 < n2; ++j) update(hr[j], rhr[j], xr[j + 1] - xr[j]);
    if (xd)
      for (int j = 0; j < n2; ++j) update(vr[j], rvr[j], xd[j] - xr[j]);
  }
}

}  // namespace detail

/// Proximal operator of weight * TV: argmin_x 1/2 ||x - z||^2 + weight * TV(x).
///
/// Fast gradient projection on the box-constrained dual. Stops after
/// `inner_iterations` or once the duality gap is below `tolerance` relative to
/// the primal objective; returns the best primal point visited. The gap is
/// evaluated every few iterations and always on the last one.
inline RealImage tv_denoise(const RealImage& z, double weight, int inner_iterations = 50,
                            double tolerance = 1e-5) {
  detail::require(weight >= 0.0, "tv_denoise: weight must be nonnegative");
  detail::require(inner_iterations >= 1, "tv_denoise: inner_iterations must be >= 1");
  detail::require(all_finite(z), "tv_denoise: input has non-finite entries");
  if (weight == 0.0 || z.size() <= 1) return z;

  constexpr int kGapEvery = 5;
  const int n1 = z.rows(), n2 = z.cols();
  RealImage ph(n1, n2), pv(n1, n2);  // dual iterate
  RealImage rh(n1, n2), rv(n1, n2);  // extrapolated point
  RealImage x(n1, n2);
  RealImage best = z;
  double best_obj = weight * total_variation(z);
  const double z_sq = squared_norm(z);
  double t = 1.0;
  const double step = 1.0 / (8.0 * weight);  // 1/L with L = 8 w^2, times w from the gradient

  for (int it = 0; it < inner_iterations; ++it) {
    detail::tv_primal_from_dual(z, weight, rh, rv, x);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    detail::tv_dual_step(x, step, (t - 1.0) / t_next, ph, pv, rh, rv);
    t = t_next;
    if ((it + 1) % kGapEvery != 0 && it + 1 < inner_iterations) continue;

    detail::tv_primal_from_dual(z, weight, ph, pv, x);
    const double obj = tv_objective(x, z, weight);
    if (obj < best_obj) {
      best_obj = obj;
      best = x;
    }
    // Dual value 1/2 (||z||^2 - ||x||^2) lower-bounds the optimum. A plain
    // objective-change test is unsafe here: the projection can pin the dual
    // for a step, repeating an objective value far from the optimum.
    const double gap = obj - 0.5 * (z_sq - squared_norm(x));
    if (gap <= tolerance * std::max(std::abs(obj), std::numeric_limits<double>::min())) break;
  }
  return best;
}

// ---------------------------------------------------------------------------

/// Non-local means. Patch distance is the mean squared difference over a
/// (2 patch_radius + 1)^2 patch with replicated borders; neighbor weights are
/// exp(-d^2 / (filtering_strength * sigma)^2) over the in-image search window,
/// and the center pixel gets the largest neighbor weight.
inline RealImage nlm_denoise(const RealImage& image, double sigma, int patch_radius, int window_radius,
                             double filtering_strength) {
  detail::require(patch_radius >= 1 && window_radius >= 1, "nlm_denoise: radii must be >= 1");
  detail::require(filtering_strength > 0.0, "nlm_denoise: filtering_strength must be positive");
  detail::require(sigma >= 0.0, "nlm_denoise: sigma must be nonnegative");
  if (sigma == 0.0 || image.size() <= 1) return image;

  const int n1 = image.rows(), n2 = image.cols();
  const int pr = patch_radius, wr = window_radius;
  const double h2 = (filtering_strength * sigma) * (filtering_strength * sigma);
  const double patch_count = static_cast<double>((2 * pr + 1) * (2 * pr + 1));
  auto at = [&](int i, int j) { return image(std::clamp(i, 0, n1 - 1), std::clamp(j, 0, n2 - 1)); };

  RealImage weight_sum(n1, n2), value_sum(n1, n2), max_weight(n1, n2);
  // Squared differences on the patch-padded domain and their integral image.
  const int p1 = n1 + 2 * pr, p2 = n2 + 2 * pr;
  std::vector<double> integral(static_cast<std::size_t>(p1 + 1) * (p2 + 1));
  auto I = [&](int i, int j) -> double& { return integral[static_cast<std::size_t>(i) * (p2 + 1) + j]; };

  for (int di = -wr; di <= wr; ++di)
    for (int dj = -wr; dj <= wr; ++dj) {
      if (di == 0 && dj == 0) continue;
      for (int i = 0; i < p1; ++i) {
        double row = 0.0;
        for (int j = 0; j < p2; ++j) {
          const int oi = i - pr, oj = j - pr;
          const double d = at(oi, oj) - at(oi + di, oj + dj);
          row += d * d;
          I(i + 1, j + 1) = I(i, j + 1) + row;
        }
      }
      for (int i = 0; i < n1; ++i) {
        const int ni = i + di;
        if (ni < 0 || ni >= n1) continue;
        for (int j = 0; j < n2; ++j) {
          const int nj = j + dj;
          if (nj < 0 || nj >= n2) continue;
          // patch rows [i, i + 2pr] and cols [j, j + 2pr] in padded coordinates
          const double ssd = I(i + 2 * pr + 1, j + 2 * pr + 1) - I(i, j + 2 * pr + 1) -
                             I(i + 2 * pr + 1, j) + I(i, j);
          const double w = std::exp(-std::max(ssd, 0.0) / patch_count / h2);
          weight_sum(i, j) += w;
          value_sum(i, j) += w * image(ni, nj);
          max_weight(i, j) = std::max(max_weight(i, j), w);
        }
      }
    }

  RealImage out(n1, n2);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double self = weight_sum[k] > 0.0 ? max_weight[k] : 1.0;
    out[k] = (value_sum[k] + self * image[k]) / (weight_sum[k] + self);
  }
  return out;
}

// ---------------------------------------------------------------------------

/// Decimal literal with 17 significant digits, as substituted for {sigma}.
inline std::string format_sigma(double sigma) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", sigma);
  return buf;
}

inline std::string substitute_sigma(std::string command, double sigma) {
  const std::string token = "{sigma}";
  const std::string value = format_sigma(sigma);
  for (auto pos = command.find(token); pos != std::string::npos; pos = command.find(token, pos + value.size()))
    command.replace(pos, token.size(), value);
  return command;
}

/// Runs an external denoiser: FPMIMG on its standard input, FPMIMG expected
/// on its standard output with the same shape.
inline RealImage denoise_external(const std::string& command, const RealImage& image, double sigma,
                                  std::chrono::milliseconds timeout = std::chrono::seconds(300)) {
  detail::require(!command.empty(), "denoise_external: empty command");
  const std::string cmd = substitute_sigma(command, sigma);
  const auto result = run_shell_command(cmd, encode_image(image), timeout);
  if (result.timed_out)
    throw PluginError("denoiser plugin '" + cmd + "' timed out", -1, result.stderr_text);
  if (result.signal != 0)
    throw PluginError("denoiser plugin '" + cmd + "' killed by signal " + std::to_string(result.signal), -1,
                      result.stderr_text);
  if (result.exit_code != 0)
    throw PluginError("denoiser plugin '" + cmd + "' exited with status " + std::to_string(result.exit_code),
                      result.exit_code, result.stderr_text);
  RealImage out;
  try {
    out = decode_real_image(result.stdout_data);
  } catch (const IoError& e) {
    throw PluginError("denoiser plugin '" + cmd + "' produced malformed output: " + e.what(), 0,
                      result.stderr_text);
  }
  if (!out.same_shape(image))
    throw PluginError("denoiser plugin '" + cmd + "' changed the image shape", 0, result.stderr_text);
  return out;
}

/// denoise_sigma(.) of the plug-and-play iteration. The TV weight is sigma^2.
inline RealImage denoise(const DenoiserSpec& spec, const DenoiseRequest& req) {
  spec.validate();
  detail::require(req.sigma >= 0.0 && std::isfinite(req.sigma), "denoise: sigma must be finite and >= 0");
  switch (spec.kind) {
    case DenoiserKind::identity:
      return req.image;
    case DenoiserKind::tv:
      return tv_denoise(req.image, req.sigma * req.sigma, spec.inner_iterations, spec.tolerance);
    case DenoiserKind::nlm:
      return nlm_denoise(req.image, req.sigma, spec.patch_radius, spec.window_radius, spec.filtering_strength);
    case DenoiserKind::external:
      return denoise_external(spec.command, req.image, req.sigma, spec.timeout);
  }
  throw InvalidArgument("denoise: unknown denoiser kind");
}

}  // namespace fpm
