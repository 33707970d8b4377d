#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <compare>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fpm/error.hpp"
#include "fpm/geometry.hpp"

namespace fpm {

struct LedIndex {
  int row = 0;
  int col = 0;
  auto operator<=>(const LedIndex&) const = default;
};

inline std::string to_string(const LedIndex& led) {
  return "(" + std::to_string(led.row) + ", " + std::to_string(led.col) + ")";
}

/// One illumination: the LED, its spatial frequency and the integer shift of
/// the spectrum crop window relative to the object spectrum's DC bin.
struct IlluminationEntry {
  LedIndex led;
  double kx = 0.0;  // rad/m, along columns
  double ky = 0.0;  // rad/m, along rows
  int offset_row = 0;
  int offset_col = 0;

  friend bool operator==(const IlluminationEntry&, const IlluminationEntry&) = default;
};

struct IlluminationPlan {
  std::vector<IlluminationEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  const IlluminationEntry& operator[](std::size_t j) const { return entries.at(j); }

  friend bool operator==(const IlluminationPlan&, const IlluminationPlan&) = default;
};

/// Either an explicit LED list or a count of LEDs taken closest-first around
/// the optical axis.
struct LedSelection {
  std::variant<std::vector<LedIndex>, std::size_t> choice;

  static LedSelection explicit_list(std::vector<LedIndex> leds) { return {std::move(leds)}; }
  static LedSelection centered(std::size_t count) { return {count}; }
};

/// The optical axis passes through LED (rows/2, cols/2).
inline LedIndex optical_axis_led(const SystemGeometry& g) {
  return {g.led_rows / 2, g.led_cols / 2};
}

/// LEDs ranked by distance to the optical axis; ties keep row-major order.
inline std::vector<LedIndex> centered_leds(const SystemGeometry& g, std::size_t count) {
  const auto total = static_cast<std::size_t>(g.led_rows) * static_cast<std::size_t>(g.led_cols);
  detail::require(count >= 1, "plan_illumination: LED count must be at least 1");
  detail::require(count <= total, "plan_illumination: requested " + std::to_string(count) +
                                      " LEDs but the array has only " + std::to_string(total));
  const LedIndex axis = optical_axis_led(g);
  std::vector<LedIndex> all;
  all.reserve(total);
  for (int r = 0; r < g.led_rows; ++r)
    for (int c = 0; c < g.led_cols; ++c) all.push_back({r, c});
  auto dist2 = [&](const LedIndex& l) {
    const long dr = l.row - axis.row;
    const long dc = l.col - axis.col;
    return dr * dr + dc * dc;
  };
  std::stable_sort(all.begin(), all.end(),
                   [&](const LedIndex& a, const LedIndex& b) { return dist2(a) < dist2(b); });
  all.resize(count);
  return all;
}

namespace detail {

inline bool crop_fits(int n, int m, int offset) {
  const int start = n / 2 + offset - m / 2;
  return start >= 0 && start + m <= n;
}

}  // namespace detail

/// Spatial frequency and crop offset for every selected LED.
///
/// An LED at physical offset (a, b) from the axis (a along columns, b along
/// rows) illuminates with k = -(2 pi / lambda) (a, b) / sqrt(d^2 + a^2 + b^2).
/// The crop offset is k rounded to the nearest object-spectrum bin.
inline IlluminationPlan plan_illumination(const SystemGeometry& g, const LedSelection& selection) {
  g.validate();
  std::vector<LedIndex> leds;
  if (const auto* count = std::get_if<std::size_t>(&selection.choice)) {
    leds = centered_leds(g, *count);
  } else {
    leds = std::get<std::vector<LedIndex>>(selection.choice);
    detail::require(!leds.empty(), "plan_illumination: explicit LED list is empty");
    std::set<LedIndex> seen;
    for (const auto& l : leds) {
      detail::require(l.row >= 0 && l.row < g.led_rows && l.col >= 0 && l.col < g.led_cols,
                      "plan_illumination: LED " + to_string(l) + " is outside the array");
      detail::require(seen.insert(l).second,
                      "plan_illumination: LED " + to_string(l) + " listed twice");
    }
  }

  const LedIndex axis = optical_axis_led(g);
  IlluminationPlan plan;
  plan.entries.reserve(leds.size());
  for (const auto& l : leds) {
    const double a = (l.col - axis.col) * g.led_pitch;
    const double b = (l.row - axis.row) * g.led_pitch;
    const double r = std::sqrt(g.led_distance * g.led_distance + a * a + b * b);
    IlluminationEntry e;
    e.led = l;
    e.kx = -g.wavenumber() * a / r;
    e.ky = -g.wavenumber() * b / r;
    e.offset_col = static_cast<int>(std::lround(e.kx / g.dk_col()));
    e.offset_row = static_cast<int>(std::lround(e.ky / g.dk_row()));
    if (!detail::crop_fits(g.object.n1, g.camera.m1, e.offset_row) ||
        !detail::crop_fits(g.object.n2, g.camera.m2, e.offset_col)) {
      throw InvalidArgument("plan_illumination: LED " + to_string(l) + " shifts the crop window by (" +
                            std::to_string(e.offset_row) + ", " + std::to_string(e.offset_col) +
                            ") pixels, outside the object spectrum");
    }
    plan.entries.push_back(e);
  }
  return plan;
}

/// Byte serialization of a plan used for the digest: per entry
/// i32 row, i32 col, f64 kx, f64 ky, i32 offset_row, i32 offset_col, all little-endian.
inline std::vector<std::uint8_t> serialize_plan(const IlluminationPlan& plan) {
  std::vector<std::uint8_t> out;
  out.reserve(plan.size() * 32);
  auto put = [&out](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  for (const auto& e : plan.entries) {
    put(static_cast<std::uint32_t>(e.led.row), 4);
    put(static_cast<std::uint32_t>(e.led.col), 4);
    put(std::bit_cast<std::uint64_t>(e.kx), 8);
    put(std::bit_cast<std::uint64_t>(e.ky), 8);
    put(static_cast<std::uint32_t>(e.offset_row), 4);
    put(static_cast<std::uint32_t>(e.offset_col), 4);
  }
  return out;
}

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t plan_digest(const IlluminationPlan& plan) {
  return fnv1a64(serialize_plan(plan));
}

}  // namespace fpm
