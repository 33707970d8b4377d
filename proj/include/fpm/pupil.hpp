#pragma once

#include <cmath>
#include <string>

#include "fpm/array2d.hpp"
#include "fpm/geometry.hpp"

namespace fpm {

/// Complex pupil on the camera k-grid, stored centered: element (q1, q2)
/// holds spatial frequency (q1 - m1/2, q2 - m2/2) in spectrum bins.
struct PupilMask {
  ComplexImage values;

  int rows() const noexcept { return values.rows(); }
  int cols() const noexcept { return values.cols(); }
};

/// Pupil radius in spectrum bins along rows and columns.
inline double pupil_radius_rows(const SystemGeometry& g) {
  return g.na_objective * g.wavenumber() / g.dk_row();
}
inline double pupil_radius_cols(const SystemGeometry& g) {
  return g.na_objective * g.wavenumber() / g.dk_col();
}

/// Ideal binary disk of radius NA * 2 pi / lambda.
inline PupilMask make_pupil(const SystemGeometry& g) {
  g.validate();
  const double kmax = g.na_objective * g.wavenumber();
  const int m1 = g.camera.m1;
  const int m2 = g.camera.m2;
  const double extent_rows = 0.5 * m1 * g.dk_row();
  const double extent_cols = 0.5 * m2 * g.dk_col();
  if (kmax > extent_rows || kmax > extent_cols) {
    throw InvalidArgument("make_pupil: pupil radius " + std::to_string(kmax) +
                          " rad/m exceeds the camera k-grid half extent (" +
                          std::to_string(std::min(extent_rows, extent_cols)) +
                          " rad/m); the pupil is undersampled");
  }
  PupilMask p{ComplexImage(m1, m2)};
  for (int q1 = 0; q1 < m1; ++q1) {
    const double ky = (q1 - m1 / 2) * g.dk_row();
    for (int q2 = 0; q2 < m2; ++q2) {
      const double kx = (q2 - m2 / 2) * g.dk_col();
      if (kx * kx + ky * ky <= kmax * kmax) p.values(q1, q2) = 1.0;
    }
  }
  return p;
}

/// Checks |P| <= 1 everywhere and that nonzero entries lie inside the NA disk.
inline bool pupil_is_admissible(const PupilMask& p, const SystemGeometry& g) {
  const double kmax = g.na_objective * g.wavenumber();
  const int m1 = p.rows();
  const int m2 = p.cols();
  for (int q1 = 0; q1 < m1; ++q1) {
    const double ky = (q1 - m1 / 2) * g.dk_row();
    for (int q2 = 0; q2 < m2; ++q2) {
      const double kx = (q2 - m2 / 2) * g.dk_col();
      const Complex v = p.values(q1, q2);
      if (std::abs(v) > 1.0 + 1e-12) return false;
      if (v != Complex{} && kx * kx + ky * ky > kmax * kmax * (1.0 + 1e-12)) return false;
    }
  }
  return true;
}

}  // namespace fpm
