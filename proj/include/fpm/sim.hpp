#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "fpm/array2d.hpp"
#include "fpm/forward.hpp"
#include "fpm/image_io.hpp"
#include "fpm/rng.hpp"

namespace fpm {

/// A builtin pattern name or an image path (PGM or real FPMIMG).
struct PhantomSpec {
  std::string source = "shepp-logan";
  double phase_scale = 1.0;  // grayscale [0, 1] maps to [0, phase_scale] radians
};

inline const std::vector<std::string>& builtin_phantoms() {
  static const std::vector<std::string> names{"ramp", "checkerboard", "disk", "shepp-logan"};
  return names;
}

inline bool is_builtin_phantom(const std::string& name) {
  const auto& b = builtin_phantoms();
  return std::find(b.begin(), b.end(), name) != b.end();
}

struct NoiseSpec {
  double input_snr_db = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
};

namespace detail {

inline RealImage shepp_logan(int n1, int n2) {
  struct Ellipse {
    double value, a, b, x0, y0, phi_deg;
  };
  // Modified Shepp-Logan (higher-contrast variant).
  static constexpr Ellipse ellipses[] = {
      {1.0, 0.69, 0.92, 0.0, 0.0, 0},          {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0},
      {-0.2, 0.11, 0.31, 0.22, 0.0, -18},      {-0.2, 0.16, 0.41, -0.22, 0.0, 18},
      {0.1, 0.21, 0.25, 0.0, 0.35, 0},         {0.1, 0.046, 0.046, 0.0, 0.1, 0},
      {0.1, 0.046, 0.046, 0.0, -0.1, 0},       {0.1, 0.046, 0.023, -0.08, -0.605, 0},
      {0.1, 0.023, 0.023, 0.0, -0.606, 0},     {0.1, 0.023, 0.046, 0.06, -0.605, 0},
  };
  RealImage img(n1, n2);
  for (int i = 0; i < n1; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / n1;
    for (int j = 0; j < n2; ++j) {
      const double x = -1.0 + 2.0 * (j + 0.5) / n2;
      double v = 0.0;
      for (const auto& e : ellipses) {
        const double phi = e.phi_deg * std::numbers::pi / 180.0;
        const double xr = (x - e.x0) * std::cos(phi) + (y - e.y0) * std::sin(phi);
        const double yr = -(x - e.x0) * std::sin(phi) + (y - e.y0) * std::cos(phi);
        if ((xr * xr) / (e.a * e.a) + (yr * yr) / (e.b * e.b) <= 1.0) v += e.value;
      }
      img(i, j) = v;
    }
  }
  const auto [lo, hi] = std::minmax_element(img.begin(), img.end());
  const double l = *lo, span = *hi - *lo;
  for (auto& v : img) v = span > 0 ? (v - l) / span : 0.0;
  return img;
}

inline RealImage builtin_pattern(const std::string& name, int n1, int n2) {
  RealImage img(n1, n2);
  if (name == "ramp") {
    for (int i = 0; i < n1; ++i)
      for (int j = 0; j < n2; ++j) img(i, j) = static_cast<double>(i + j) / std::max(1, n1 + n2 - 2);
  } else if (name == "checkerboard") {
    const int b1 = std::max(1, n1 / 8), b2 = std::max(1, n2 / 8);
    for (int i = 0; i < n1; ++i)
      for (int j = 0; j < n2; ++j) img(i, j) = ((i / b1) + (j / b2)) % 2;
  } else if (name == "disk") {
    const double r = 0.3 * std::min(n1, n2);
    for (int i = 0; i < n1; ++i)
      for (int j = 0; j < n2; ++j) {
        const double di = i + 0.5 - 0.5 * n1, dj = j + 0.5 - 0.5 * n2;
        img(i, j) = di * di + dj * dj <= r * r ? 1.0 : 0.0;
      }
  } else if (name == "shepp-logan") {
    img = shepp_logan(n1, n2);
  } else {
    throw InvalidArgument("unknown builtin phantom '" + name + "'");
  }
  return img;
}

/// Bilinear resampling with pixel-center alignment and clamped borders.
inline RealImage resample_bilinear(const RealImage& in, int n1, int n2) {
  if (in.rows() == n1 && in.cols() == n2) return in;
  RealImage out(n1, n2);
  const double sy = static_cast<double>(in.rows()) / n1, sx = static_cast<double>(in.cols()) / n2;
  for (int i = 0; i < n1; ++i) {
    const double fy = std::clamp((i + 0.5) * sy - 0.5, 0.0, in.rows() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, in.rows() - 1);
    const double ty = fy - y0;
    for (int j = 0; j < n2; ++j) {
      const double fx = std::clamp((j + 0.5) * sx - 0.5, 0.0, in.cols() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, in.cols() - 1);
      const double tx = fx - x0;
      out(i, j) = (1 - ty) * ((1 - tx) * in(y0, x0) + tx * in(y0, x1)) + ty * ((1 - tx) * in(y1, x0) + tx * in(y1, x1));
    }
  }
  return out;
}

}  // namespace detail

/// Phase image on the object grid. Files are relative to `base_dir`.
inline PhaseObject make_phantom(const PhantomSpec& spec, const ObjectGrid& grid,
                                const std::filesystem::path& base_dir = {}) {
  detail::require(spec.phase_scale > 0.0, "make_phantom: phase_scale must be positive");
  detail::require(grid.n1 > 0 && grid.n2 > 0, "make_phantom: empty grid");
  RealImage gray;
  if (is_builtin_phantom(spec.source)) {
    gray = detail::builtin_pattern(spec.source, grid.n1, grid.n2);
  } else {
    std::filesystem::path path = spec.source;
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    if (!std::filesystem::exists(path))
      throw IoError("phantom '" + spec.source + "' is neither a builtin (ramp, checkerboard, disk, "
                    "shepp-logan) nor a readable file");
    const Bytes head = read_file(path);
    if (head.size() >= 8 && std::string_view(reinterpret_cast<const char*>(head.data()), 8) == kImageMagic) {
      gray = decode_real_image(head);
    } else {
      gray = read_pgm_normalized(path);
    }
    gray = detail::resample_bilinear(gray, grid.n1, grid.n2);
  }
  for (auto& v : gray) v *= spec.phase_scale;
  return gray;
}

/// Adds iid Gaussian noise with one variance for the whole stack:
/// sigma_e^2 = ||y||^2 / (M 10^(snr/10)), M the total number of entries.
inline MeasurementStack add_awgn(const MeasurementStack& y, const NoiseSpec& noise) {
  detail::require(!y.frames.empty(), "add_awgn: empty stack");
  detail::require(!std::isnan(noise.input_snr_db) && noise.input_snr_db != -std::numeric_limits<double>::infinity(),
                  "add_awgn: input SNR must be finite or +inf");
  if (std::isinf(noise.input_snr_db)) return y;
  double power = 0.0;
  std::size_t count = 0;
  for (const auto& f : y.frames) {
    power += squared_norm(f);
    count += f.size();
  }
  detail::require(power > 0.0, "add_awgn: all-zero stack has no defined noise scale");
  const double sigma = std::sqrt(power / (static_cast<double>(count) * std::pow(10.0, noise.input_snr_db / 10.0)));
  MeasurementStack out = y;
  Rng rng(derive_seed(noise.seed, kStreamNoise, 0));
  for (auto& f : out.frames)
    for (auto& v : f) v += sigma * rng.normal();
  return out;
}

/// 10 log10(||clean||^2 / ||noisy - clean||^2).
inline double realized_input_snr_db(const MeasurementStack& clean, const MeasurementStack& noisy) {
  detail::require(clean.size() == noisy.size(), "realized_input_snr_db: stack sizes differ");
  double s = 0.0, e = 0.0;
  for (std::size_t j = 0; j < clean.size(); ++j) {
    require_same_shape(clean.frames[j], noisy.frames[j], "realized_input_snr_db");
    for (std::size_t i = 0; i < clean.frames[j].size(); ++i) {
      s += clean.frames[j][i] * clean.frames[j][i];
      const double d = noisy.frames[j][i] - clean.frames[j][i];
      e += d * d;
    }
  }
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(s / e);
}

}  // namespace fpm
