#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fpm/array2d.hpp"
#include "fpm/fft.hpp"
#include "fpm/geometry.hpp"
#include "fpm/illumination.hpp"
#include "fpm/parallel.hpp"
#include "fpm/pupil.hpp"

namespace fpm {

/// J low-resolution intensity frames, tied to the plan that produced them.
struct MeasurementStack {
  std::vector<RealImage> frames;
  std::uint64_t plan_digest = 0;

  std::size_t size() const noexcept { return frames.size(); }
  friend bool operator==(const MeasurementStack&, const MeasurementStack&) = default;
};

inline void check_digest(const MeasurementStack& y, const IlluminationPlan& plan) {
  if (y.plan_digest != plan_digest(plan)) {
    throw DigestMismatch("measurement stack digest does not match the illumination plan");
  }
}

struct FidelityAndGradient {
  double value = 0.0;
  RealImage gradient;
};

/// The FPM measurement operator H_j = F_c^-1 diag(P) S_j F_o for each
/// illumination j of a plan, together with the quadratic data fidelity
///   d(x) = (1/|S|) sum_{j in S} || |H_j e^{ix}|^2 - y_j ||^2
/// and its gradient with respect to the real phase x.
///
/// Sums over illuminations are always reduced in ascending index order, so
/// results do not depend on the worker count.
class FpmOperator {
 public:
  FpmOperator(ObjectGrid object, IlluminationPlan plan, PupilMask pupil, int workers = 1)
      : object_(object),
        plan_(std::move(plan)),
        pupil_(std::move(pupil)),
        workers_(workers),
        object_fft_(object_.n1, object_.n2),
        camera_fft_(pupil_.rows(), pupil_.cols()) {
    const int n1 = object_.n1, n2 = object_.n2, m1 = pupil_.rows(), m2 = pupil_.cols();
    detail::require(n1 > 0 && n2 > 0 && m1 > 0 && m2 > 0 && n1 % 2 == 0 && n2 % 2 == 0 &&
                        m1 % 2 == 0 && m2 % 2 == 0,
                    "FpmOperator: grid dimensions must be positive and even");
    detail::require(n1 >= m1 && n2 >= m2, "FpmOperator: camera grid exceeds object grid");
    detail::require(plan_.size() > 0, "FpmOperator: empty illumination plan");
    tables_.reserve(plan_.size());
    for (const auto& e : plan_.entries) {
      if (!detail::crop_fits(n1, m1, e.offset_row) || !detail::crop_fits(n2, m2, e.offset_col)) {
        throw InvalidArgument("FpmOperator: crop window of LED " + to_string(e.led) +
                              " leaves the object spectrum");
      }
      tables_.push_back(make_table(e));
    }
  }

  /// Builds plan and pupil from a geometry.
  static FpmOperator from_geometry(const SystemGeometry& g, const LedSelection& selection,
                                   int workers = 1) {
    return FpmOperator(g.object, plan_illumination(g, selection), make_pupil(g), workers);
  }

  std::size_t num_components() const noexcept { return plan_.size(); }
  const IlluminationPlan& plan() const noexcept { return plan_; }
  const PupilMask& pupil() const noexcept { return pupil_; }
  const ObjectGrid& object_grid() const noexcept { return object_; }
  int camera_rows() const noexcept { return pupil_.rows(); }
  int camera_cols() const noexcept { return pupil_.cols(); }
  int workers() const noexcept { return workers_; }
  void set_workers(int workers) noexcept { workers_ = workers; }

  /// F_o e^{ix}, unitary, natural order.
  ComplexField transmittance_spectrum(const PhaseObject& x) const {
    detail::require(x.rows() == object_.n1 && x.cols() == object_.n2,
                    "transmittance_spectrum: phase image does not match the object grid");
    ComplexField s(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) s[i] = std::polar(1.0, x[i]);
    object_fft_.forward(s);
    return s;
  }

  /// H_j u for an arbitrary object-sized complex field u.
  ComplexField apply(const ComplexField& u, std::size_t j) const {
    check_object_field(u, "apply");
    ComplexField s = u;
    object_fft_.forward(s);
    return field_from_spectrum(s, j);
  }

  /// H_j^dagger v = F_o^-1 embed_j(conj(P) . F_c v) for a camera-sized field v.
  ComplexField apply_adjoint(const ComplexField& v, std::size_t j) const {
    check_camera_field(v, "apply_adjoint");
    ComplexField spectrum(object_.n1, object_.n2);
    ComplexField w = v;
    camera_fft_.forward(w);
    embed_add(spectrum, w, j);
    object_fft_.inverse(spectrum);
    return spectrum;
  }

  /// Psi_j(x) = H_j e^{ix}.
  ComplexField forward_field(const PhaseObject& x, std::size_t j) const {
    return field_from_spectrum(transmittance_spectrum(x), j);
  }

  /// Noiseless frames |Psi_j(x)|^2 for every illumination of the plan.
  MeasurementStack forward_intensity(const PhaseObject& x) const {
    const ComplexField spectrum = transmittance_spectrum(x);
    MeasurementStack y;
    y.plan_digest = plan_digest(plan_);
    y.frames.resize(plan_.size());
    detail::parallel_for(plan_.size(), workers_, [&](std::size_t j) {
      const ComplexField psi = field_from_spectrum(spectrum, j);
      RealImage frame(psi.rows(), psi.cols());
      for (std::size_t i = 0; i < psi.size(); ++i) frame[i] = std::norm(psi[i]);
      y.frames[j] = std::move(frame);
    });
    return y;
  }

  double data_fidelity(const PhaseObject& x, const MeasurementStack& y,
                       std::span<const std::size_t> subset) const {
    const auto order = sorted_subset(subset, y);
    const ComplexField spectrum = transmittance_spectrum(x);
    std::vector<double> terms(order.size());
    detail::parallel_for(order.size(), workers_, [&](std::size_t t) {
      const ComplexField psi = field_from_spectrum(spectrum, order[t]);
      const RealImage& frame = y.frames[order[t]];
      double s = 0.0;
      for (std::size_t i = 0; i < psi.size(); ++i) {
        const double r = std::norm(psi[i]) - frame[i];
        s += r * r;
      }
      terms[t] = s;
    });
    double total = 0.0;
    for (double v : terms) total += v;
    return total / static_cast<double>(order.size());
  }

  /// Exact gradient of data_fidelity:
  ///   g = (4/|S|) sum_j Re{ conj(i e^{ix}) . H_j^dagger [Psi_j . (|Psi_j|^2 - y_j)] }.
  RealImage grad_data(const PhaseObject& x, const MeasurementStack& y,
                      std::span<const std::size_t> subset) const {
    return fidelity_and_gradient(x, y, subset).gradient;
  }

  FidelityAndGradient fidelity_and_gradient(const PhaseObject& x, const MeasurementStack& y,
                                            std::span<const std::size_t> subset) const {
    const auto order = sorted_subset(subset, y);
    const ComplexField spectrum = transmittance_spectrum(x);
    ComplexField accumulated(object_.n1, object_.n2);
    std::vector<double> terms(order.size());

    // Camera-domain work per illumination; the spectrum embedding is then
    // reduced in ascending order.
    auto residual_spectrum = [&](std::size_t t) {
      ComplexField psi = field_from_spectrum(spectrum, order[t]);
      const RealImage& frame = y.frames[order[t]];
      double s = 0.0;
      for (std::size_t i = 0; i < psi.size(); ++i) {
        const double r = std::norm(psi[i]) - frame[i];
        s += r * r;
        psi[i] *= r;
      }
      terms[t] = s;
      camera_fft_.forward(psi);
      return psi;
    };

    if (workers_ <= 1 || order.size() <= 1) {
      for (std::size_t t = 0; t < order.size(); ++t)
        embed_add(accumulated, residual_spectrum(t), order[t]);
    } else {
      std::vector<ComplexField> parts(order.size());
      detail::parallel_for(order.size(), workers_,
                           [&](std::size_t t) { parts[t] = residual_spectrum(t); });
      for (std::size_t t = 0; t < order.size(); ++t) embed_add(accumulated, parts[t], order[t]);
    }
    object_fft_.inverse(accumulated);

    FidelityAndGradient out;
    const double count = static_cast<double>(order.size());
    for (double v : terms) out.value += v;
    out.value /= count;
    out.gradient = RealImage(object_.n1, object_.n2);
    const double scale = 4.0 / count;
    for (std::size_t i = 0; i < x.size(); ++i) {
      // Re{(-sin x - i cos x)(a + i b)} = b cos x - a sin x
      const Complex a = accumulated[i];
      out.gradient[i] = scale * (a.imag() * std::cos(x[i]) - a.real() * std::sin(x[i]));
    }
    return out;
  }

  /// All component indices 0..J-1.
  std::vector<std::size_t> all_indices() const {
    std::vector<std::size_t> idx(plan_.size());
    for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = j;
    return idx;
  }

 private:
  // Per-illumination index maps from centered camera bins (q1, q2) to natural
  // order positions in the object spectrum (src) and camera spectrum (dst).
  struct CropTable {
    std::vector<int> src_row, src_col, dst_row, dst_col;
  };

  CropTable make_table(const IlluminationEntry& e) const {
    const int n1 = object_.n1, n2 = object_.n2, m1 = pupil_.rows(), m2 = pupil_.cols();
    CropTable t;
    t.src_row.resize(m1);
    t.dst_row.resize(m1);
    t.src_col.resize(m2);
    t.dst_col.resize(m2);
    for (int q = 0; q < m1; ++q) {
      const int f = q - m1 / 2;
      t.src_row[q] = wrap(f + e.offset_row, n1);
      t.dst_row[q] = wrap(f, m1);
    }
    for (int q = 0; q < m2; ++q) {
      const int f = q - m2 / 2;
      t.src_col[q] = wrap(f + e.offset_col, n2);
      t.dst_col[q] = wrap(f, m2);
    }
    return t;
  }

  static int wrap(int f, int n) { return ((f % n) + n) % n; }

  ComplexField field_from_spectrum(const ComplexField& spectrum, std::size_t j) const {
    const CropTable& t = tables_.at(j);
    const int m1 = pupil_.rows(), m2 = pupil_.cols();
    ComplexField c(m1, m2);
    for (int q1 = 0; q1 < m1; ++q1)
      for (int q2 = 0; q2 < m2; ++q2)
        c(t.dst_row[q1], t.dst_col[q2]) = pupil_.values(q1, q2) * spectrum(t.src_row[q1], t.src_col[q2]);
    camera_fft_.inverse(c);
    return c;
  }

  void embed_add(ComplexField& spectrum, const ComplexField& camera_spectrum, std::size_t j) const {
    const CropTable& t = tables_.at(j);
    const int m1 = pupil_.rows(), m2 = pupil_.cols();
    for (int q1 = 0; q1 < m1; ++q1)
      for (int q2 = 0; q2 < m2; ++q2)
        spectrum(t.src_row[q1], t.src_col[q2]) +=
            std::conj(pupil_.values(q1, q2)) * camera_spectrum(t.dst_row[q1], t.dst_col[q2]);
  }

  std::vector<std::size_t> sorted_subset(std::span<const std::size_t> subset,
                                         const MeasurementStack& y) const {
    detail::require(!subset.empty(), "data fidelity: empty component subset");
    detail::require(y.size() == plan_.size(),
                    "data fidelity: stack has " + std::to_string(y.size()) + " frames, plan has " +
                        std::to_string(plan_.size()));
    for (std::size_t j : subset)
      detail::require(j < plan_.size(), "data fidelity: component index " + std::to_string(j) +
                                            " out of range");
    for (const auto& f : y.frames)
      detail::require(f.rows() == pupil_.rows() && f.cols() == pupil_.cols(),
                      "data fidelity: frame shape does not match the camera grid");
    std::vector<std::size_t> order(subset.begin(), subset.end());
    std::sort(order.begin(), order.end());
    return order;
  }

  void check_object_field(const ComplexField& u, const char* what) const {
    detail::require(u.rows() == object_.n1 && u.cols() == object_.n2,
                    std::string(what) + ": field does not match the object grid");
  }
  void check_camera_field(const ComplexField& v, const char* what) const {
    detail::require(v.rows() == pupil_.rows() && v.cols() == pupil_.cols(),
                    std::string(what) + ": field does not match the camera grid");
  }

  ObjectGrid object_;
  IlluminationPlan plan_;
  PupilMask pupil_;
  int workers_;
  UnitaryFft2 object_fft_;
  UnitaryFft2 camera_fft_;
  std::vector<CropTable> tables_;
};

}  // namespace fpm
