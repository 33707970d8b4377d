#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "fpm/error.hpp"

namespace fpm {

/// High-resolution object plane sampling.
struct ObjectGrid {
  int n1 = 0;  // rows
  int n2 = 0;  // cols
  double pixel_pitch = 0.0;  // meters per object pixel

  friend bool operator==(const ObjectGrid&, const ObjectGrid&) = default;
};

/// Low-resolution camera plane sampling.
struct CameraGrid {
  int m1 = 0;  // rows
  int m2 = 0;  // cols

  friend bool operator==(const CameraGrid&, const CameraGrid&) = default;
};

struct SystemGeometry {
  int led_rows = 0;
  int led_cols = 0;
  double led_pitch = 0.0;     // meters
  double led_distance = 0.0;  // sample to LED array, meters
  double wavelength = 0.0;    // meters
  double na_objective = 0.0;
  ObjectGrid object;
  CameraGrid camera;

  /// Spectral sampling of the object DFT along rows (k_y) and columns (k_x), rad/m.
  double dk_row() const { return 2.0 * std::numbers::pi / (object.n1 * object.pixel_pitch); }
  double dk_col() const { return 2.0 * std::numbers::pi / (object.n2 * object.pixel_pitch); }
  double wavenumber() const { return 2.0 * std::numbers::pi / wavelength; }

  void validate() const {
    using detail::require;
    require(led_rows > 0 && led_cols > 0, "geometry: LED array dimensions must be positive");
    require(led_pitch > 0.0 && led_distance > 0.0, "geometry: LED pitch and distance must be positive");
    require(wavelength > 100e-9 && wavelength < 2000e-9,
            "geometry: wavelength must lie in (100 nm, 2000 nm), got " + std::to_string(wavelength));
    require(na_objective > 0.0 && na_objective < 1.0, "geometry: na_objective must lie in (0, 1)");
    require(object.pixel_pitch > 0.0, "geometry: object pixel pitch must be positive");
    require(object.n1 > 0 && object.n2 > 0 && object.n1 % 2 == 0 && object.n2 % 2 == 0,
            "geometry: object grid dimensions must be positive and even");
    require(camera.m1 > 0 && camera.m2 > 0 && camera.m1 % 2 == 0 && camera.m2 % 2 == 0,
            "geometry: camera grid dimensions must be positive and even");
    require(object.n1 >= camera.m1 && object.n2 >= camera.m2,
            "geometry: camera grid must not exceed the object grid");
  }

  friend bool operator==(const SystemGeometry&, const SystemGeometry&) = default;
};

/// 128x128 object, 64x64 camera, 7x7 LEDs. Fast enough for test suites.
inline SystemGeometry desk_geometry() {
  SystemGeometry g;
  g.led_rows = 7;
  g.led_cols = 7;
  g.led_pitch = 4e-3;
  g.led_distance = 70e-3;
  g.wavelength = 513e-9;
  g.na_objective = 0.2;
  g.object = {128, 128, 0.5e-6};
  g.camera = {64, 64};
  return g;
}

/// 32x32 LED array at 4 mm pitch, 70 mm away, 513 nm, NA 0.2, 500x500 object.
inline SystemGeometry paper_geometry() {
  SystemGeometry g;
  g.led_rows = 32;
  g.led_cols = 32;
  g.led_pitch = 4e-3;
  g.led_distance = 70e-3;
  g.wavelength = 513e-9;
  g.na_objective = 0.2;
  g.object = {500, 500, 0.25e-6};
  g.camera = {100, 100};
  return g;
}

inline constexpr std::size_t kDeskLedCount = 37;
inline constexpr std::size_t kPaperLedCount = 293;

}  // namespace fpm
