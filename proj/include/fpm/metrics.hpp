#pragma once

#include <algorithm>
#include <cmath>

#include "fpm/array2d.hpp"

namespace fpm {

inline constexpr double kSnrCapDb = 300.0;

/// Reconstruction SNR in dB: 20 log10(||ref|| / ||ref - est||).
/// With align_offset the constant c = mean(est - ref) is removed from the
/// estimate first, since a global phase offset is invisible to the measurements.
inline double snr_db(const RealImage& reference, const RealImage& estimate, bool align_offset = true) {
  require_same_shape(reference, estimate, "snr_db");
  const double ref_norm = norm(reference);
  detail::require(ref_norm > 0.0, "snr_db: reference has zero norm");
  double offset = 0.0;
  if (align_offset) {
    for (std::size_t i = 0; i < reference.size(); ++i) offset += estimate[i] - reference[i];
    offset /= static_cast<double>(reference.size());
  }
  double err = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = reference[i] - (estimate[i] - offset);
    err += d * d;
  }
  if (err == 0.0) return kSnrCapDb;
  return std::min(kSnrCapDb, 20.0 * std::log10(ref_norm / std::sqrt(err)));
}

}  // namespace fpm
