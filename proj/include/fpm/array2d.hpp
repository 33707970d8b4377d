#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fpm/error.hpp"

namespace fpm {

/// Dense row-major 2D array with value semantics.
template <typename T>
class Array2D {
 public:
  using value_type = T;

  Array2D() = default;
  Array2D(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(checked_size(rows, cols), fill) {}
  Array2D(int rows, int cols, std::vector<T> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    detail::require(data_.size() == checked_size(rows, cols),
                    "Array2D: value count does not match shape");
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int r, int c) noexcept { return data_[index(r, c)]; }
  const T& operator()(int r, int c) const noexcept { return data_[index(r, c)]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  template <typename U>
  bool same_shape(const Array2D<U>& other) const noexcept {
    return rows_ == other.rows() && cols_ == other.cols();
  }

  void fill(const T& value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const Array2D&, const Array2D&) = default;

 private:
  static std::size_t checked_size(int rows, int cols) {
    detail::require(rows >= 0 && cols >= 0, "Array2D: negative dimension");
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  }
  std::size_t index(int r, int c) const noexcept {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) +
           static_cast<std::size_t>(c);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using Complex = std::complex<double>;
using RealImage = Array2D<double>;
using ComplexImage = Array2D<Complex>;

/// Real phase image x in radians; the transmittance is exp(i x).
using PhaseObject = RealImage;
/// Complex field on the object or camera grid.
using ComplexField = ComplexImage;

template <typename T, typename U>
void require_same_shape(const Array2D<T>& a, const Array2D<U>& b, const char* what) {
  detail::require(a.same_shape(b), std::string(what) + ": shape mismatch (" +
                                       std::to_string(a.rows()) + "x" +
                                       std::to_string(a.cols()) + " vs " +
                                       std::to_string(b.rows()) + "x" +
                                       std::to_string(b.cols()) + ")");
}

template <typename T>
double squared_norm(const Array2D<T>& a) {
  double s = 0.0;
  for (const auto& v : a) s += std::norm(v);
  return s;
}

template <typename T>
double norm(const Array2D<T>& a) {
  return std::sqrt(squared_norm(a));
}

/// Complex inner product <a, b> = sum conj(a) b.
inline Complex inner(const ComplexImage& a, const ComplexImage& b) {
  require_same_shape(a, b, "inner");
  Complex s{};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

template <typename T>
bool all_finite(const Array2D<T>& a) {
  return std::all_of(a.begin(), a.end(), [](const T& v) {
    if constexpr (std::is_floating_point_v<T>) {
      return std::isfinite(v);
    } else {
      return std::isfinite(v.real()) && std::isfinite(v.imag());
    }
  });
}

inline double mean(const RealImage& a) {
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (double v : a) s += v;
  return s / static_cast<double>(a.size());
}

inline double max_abs_diff(const RealImage& a, const RealImage& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace fpm
