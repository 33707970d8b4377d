#pragma once

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include "fpm/array2d.hpp"

namespace fpm {
namespace detail {

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const noexcept { fftw_destroy_plan(p); }
};
using FftwPlanPtr = std::unique_ptr<fftw_plan_s, FftwPlanDeleter>;

// The FFTW planner is not re-entrant; execution of an existing plan on new
// arrays is. Plans live for the lifetime of the process.
inline fftw_plan cached_plan(int rows, int cols, int sign) {
  static std::mutex mutex;
  static std::map<std::tuple<int, int, int>, FftwPlanPtr> plans;
  std::lock_guard lock(mutex);
  auto& slot = plans[{rows, cols, sign}];
  if (!slot) {
    auto* scratch = fftw_alloc_complex(static_cast<std::size_t>(rows) * cols);
    slot.reset(fftw_plan_dft_2d(rows, cols, scratch, scratch, sign,
                                FFTW_ESTIMATE | FFTW_UNALIGNED));
    fftw_free(scratch);
  }
  return slot.get();
}

}  // namespace detail

/// In-place unitary 2D DFT: both directions are scaled by 1/sqrt(rows*cols),
/// so the inverse is exactly the adjoint of the forward transform.
/// Spectra are kept in natural (unshifted) order.
class UnitaryFft2 {
 public:
  UnitaryFft2(int rows, int cols)
      : rows_(rows),
        cols_(cols),
        scale_(1.0 / std::sqrt(static_cast<double>(rows) * cols)),
        forward_(detail::cached_plan(rows, cols, FFTW_FORWARD)),
        inverse_(detail::cached_plan(rows, cols, FFTW_BACKWARD)) {}

  void forward(ComplexImage& a) const { run(forward_, a); }
  void inverse(ComplexImage& a) const { run(inverse_, a); }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }

 private:
  void run(fftw_plan plan, ComplexImage& a) const {
    detail::require(a.rows() == rows_ && a.cols() == cols_, "UnitaryFft2: shape mismatch");
    auto* p = reinterpret_cast<fftw_complex*>(a.data());
    fftw_execute_dft(plan, p, p);
    for (auto& v : a) v *= scale_;
  }

  int rows_;
  int cols_;
  double scale_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

}  // namespace fpm
