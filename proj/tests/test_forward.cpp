#include <gtest/gtest.h>

#include <numbers>

#include "fpm/forward.hpp"
#include "fpm/selftest.hpp"
#include "test_support.hpp"

using namespace fpm;
using namespace fpm::test;

namespace {

FpmOperator small_operator(std::mt19937_64& rng, bool complex_pupil) {
  const auto g = small_geometry();
  auto pupil = make_pupil(g);
  if (complex_pupil) pupil = random_complex_pupil(pupil, rng);
  return FpmOperator(g.object, plan_illumination(g, LedSelection::centered(9)), pupil);
}

double rel_diff(const ComplexField& a, const ComplexField& b) {
  double num = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) num += std::norm(a[i] - b[i]);
  return std::sqrt(num) / std::max(norm(b), 1e-300);
}

}  // namespace

TEST(Forward, ZeroPhaseWithFullPupilGivesUnitIntensity) {
  // m = n and an all-ones pupil make H the identity.
  const ObjectGrid grid{8, 8, 1e-6};
  PupilMask pupil{ComplexImage(8, 8, Complex(1.0))};
  const FpmOperator op(grid, single_offset_plan({{0, 0}}), pupil);
  const auto y = op.forward_intensity(PhaseObject(8, 8));
  for (double v : y.frames[0]) EXPECT_NEAR(v, 1.0, 1e-14);
}

TEST(Forward, ZeroPhaseThroughSmallPupilIsTheDcFraction) {
  // With m < n only the DC bin survives: |F_c^-1 (sqrt(n1 n2) e_0)|^2 = n1 n2 / (m1 m2).
  const auto g = small_geometry();
  const auto op = FpmOperator::from_geometry(g, LedSelection::centered(1));
  const auto y = op.forward_intensity(PhaseObject(32, 32));
  for (double v : y.frames[0]) EXPECT_NEAR(v, 4.0, 1e-12);
}

TEST(Forward, MatchesDirectSummation) {
  std::mt19937_64 rng(11);
  const auto op = small_operator(rng, true);
  const ComplexField u = random_field(32, 32, rng);
  for (std::size_t j = 0; j < op.num_components(); ++j) {
    const auto& e = op.plan()[j];
    EXPECT_LT(rel_diff(op.apply(u, j), direct_forward(u, e.offset_row, e.offset_col, op.pupil())), 1e-12)
        << "component " << j;
  }
}

TEST(Forward, AdjointIdentityOnRandomFields) {
  std::mt19937_64 rng(12);
  const auto op = small_operator(rng, true);
  Rng r(5);
  EXPECT_LT(max_adjoint_error(op, 50, r), 1e-12);
}

TEST(Forward, AdjointWithUnconjugatedPupilIsCaught) {
  std::mt19937_64 rng(13);
  const auto op = small_operator(rng, true);
  PupilMask conj_pupil = op.pupil();
  for (auto& v : conj_pupil.values) v = std::conj(v);
  const FpmOperator wrong(op.object_grid(), op.plan(), conj_pupil);
  Rng r(6);
  const double err = max_adjoint_error(op, 20, r, [&](const FpmOperator&, const ComplexField& v, std::size_t j) {
    return wrong.apply_adjoint(v, j);
  });
  EXPECT_GT(err, 1e-3);
}

TEST(Forward, AdjointOfZeroIsZero) {
  std::mt19937_64 rng(14);
  const auto op = small_operator(rng, true);
  const auto out = op.apply_adjoint(ComplexField(16, 16), 3);
  for (const auto& v : out) EXPECT_EQ(v, Complex{});
}

TEST(Forward, Linearity) {
  std::mt19937_64 rng(15);
  const auto op = small_operator(rng, true);
  const auto u = random_field(32, 32, rng), w = random_field(32, 32, rng);
  const Complex a(0.3, -1.2), b(-2.0, 0.5);
  ComplexField mix(32, 32);
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * u[i] + b * w[i];
  const auto hu = op.apply(u, 4), hw = op.apply(w, 4);
  ComplexField expect(16, 16);
  for (std::size_t i = 0; i < expect.size(); ++i) expect[i] = a * hu[i] + b * hw[i];
  EXPECT_LT(rel_diff(op.apply(mix, 4), expect), 1e-13);
}

TEST(Forward, SingleFrequencyNormalOperator) {
  // H^dagger H acting on a plane wave scales it by |P|^2 at its camera bin.
  std::mt19937_64 rng(16);
  const auto op = small_operator(rng, true);
  const std::size_t j = 1;
  const auto& e = op.plan()[j];
  for (auto [f1, f2] : {std::pair{0, 0}, {2, -3}, {5, 1}, {12, 12}}) {
    ComplexField u(32, 32);
    for (int r = 0; r < 32; ++r)
      for (int c = 0; c < 32; ++c)
        u(r, c) = std::polar(1.0, 2.0 * std::numbers::pi * (f1 * r + f2 * c) / 32.0);
    const int g1 = f1 - e.offset_row, g2 = f2 - e.offset_col;
    Complex p{};
    if (g1 >= -8 && g1 < 8 && g2 >= -8 && g2 < 8) p = op.pupil().values(g1 + 8, g2 + 8);
    const auto out = op.apply_adjoint(op.apply(u, j), j);
    ComplexField expect = u;
    for (auto& v : expect) v *= std::norm(p);
    double err = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) err = std::max(err, std::abs(out[i] - expect[i]));
    EXPECT_LT(err, 1e-12) << f1 << "," << f2;
  }
}

TEST(Forward, IntensitiesAreNonnegativeAndEnergyBounded) {
  std::mt19937_64 rng(17);
  const auto op = small_operator(rng, true);
  const auto x = random_phase(32, 32, rng, 3.0);
  const auto y = op.forward_intensity(x);
  for (const auto& f : y.frames) {
    double total = 0.0;
    for (double v : f) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_LE(total, 32.0 * 32.0 * (1.0 + 1e-12));
  }
}

TEST(Forward, GlobalPhaseInvariance) {
  std::mt19937_64 rng(18);
  const auto op = small_operator(rng, true);
  const auto x = random_phase(32, 32, rng);
  const auto truth = random_phase(32, 32, rng);
  const auto y = op.forward_intensity(truth);
  const auto all = op.all_indices();
  const auto base = op.fidelity_and_gradient(x, y, all);
  for (double c : {0.1, 1.0, std::numbers::pi}) {
    PhaseObject xc = x;
    for (auto& v : xc) v += c;
    const auto yc = op.forward_intensity(xc);
    const auto y0 = op.forward_intensity(x);
    for (std::size_t j = 0; j < y0.size(); ++j)
      EXPECT_LT(max_abs_diff(y0.frames[j], yc.frames[j]), 1e-12);
    const auto shifted = op.fidelity_and_gradient(xc, y, all);
    EXPECT_NEAR(shifted.value, base.value, 1e-10 * base.value);
    EXPECT_LT(max_abs_diff(shifted.gradient, base.gradient), 1e-10 * norm(base.gradient));
  }
}

TEST(Forward, GradientSumsToZero) {
  std::mt19937_64 rng(19);
  const auto op = small_operator(rng, true);
  const auto y = op.forward_intensity(random_phase(32, 32, rng));
  const auto g = op.grad_data(random_phase(32, 32, rng), y, op.all_indices());
  double s = 0.0;
  for (double v : g) s += v;
  EXPECT_LT(std::abs(s), 1e-10 * norm(g) * 32.0);
}

TEST(Fidelity, TwoByTwoByHand) {
  // H is the identity, so |H e^{ix}|^2 = 1 everywhere:
  // frame 0: (1-0)^2 + (1-1)^2 + (1-2)^2 + (1-3)^2 = 6, frame 1: 4 ones = 4.
  const ObjectGrid grid{2, 2, 1e-6};
  PupilMask pupil{ComplexImage(2, 2, Complex(1.0))};
  const FpmOperator op(grid, single_offset_plan({{0, 0}, {0, 0}}), pupil);
  MeasurementStack y;
  y.frames = {RealImage(2, 2, {0.0, 1.0, 2.0, 3.0}), RealImage(2, 2)};
  y.plan_digest = plan_digest(op.plan());
  PhaseObject x(2, 2, {0.3, -1.0, 2.0, 0.0});
  const std::vector<std::size_t> first{0}, both{0, 1};
  EXPECT_NEAR(op.data_fidelity(x, y, first), 6.0, 1e-14);
  EXPECT_NEAR(op.data_fidelity(x, y, both), 5.0, 1e-14);
  // Constant modulus means no phase direction changes the fidelity.
  for (double v : op.grad_data(x, y, both)) EXPECT_NEAR(v, 0.0, 1e-14);
}

TEST(Fidelity, MatchesDirectSummation) {
  std::mt19937_64 rng(20);
  const auto op = small_operator(rng, false);
  const auto y = op.forward_intensity(random_phase(32, 32, rng));
  const auto x = random_phase(32, 32, rng);
  const std::vector<std::size_t> subset{0, 3, 3, 7};
  const double ours = op.data_fidelity(x, y, subset);
  const double direct = direct_fidelity(x, y, op.plan(), op.pupil(), subset);
  EXPECT_NEAR(ours, direct, 1e-11 * direct);
}

TEST(Fidelity, ZeroWithZeroGradientAtTruth) {
  std::mt19937_64 rng(21);
  const auto op = small_operator(rng, true);
  const auto truth = random_phase(32, 32, rng);
  const auto y = op.forward_intensity(truth);
  const auto fg = op.fidelity_and_gradient(truth, y, op.all_indices());
  EXPECT_LT(fg.value, 1e-24);
  EXPECT_LT(norm(fg.gradient), 1e-10);
}

TEST(Fidelity, GradientMatchesDirectFiniteDifferences) {
  std::mt19937_64 rng(22);
  const auto op = small_operator(rng, true);
  const auto truth = random_phase(32, 32, rng, 0.5);
  const auto y = op.forward_intensity(truth);
  PhaseObject x = truth;
  std::uniform_real_distribution<double> d(-0.1, 0.1);
  for (auto& v : x) v += d(rng);
  const std::vector<std::size_t> subset{1, 2, 5};
  const auto g = op.grad_data(x, y, subset);
  const double h = 1e-5;
  double err = 0.0, ref = 0.0;
  for (std::size_t i : {0ul, 37ul, 300ul, 511ul, 1000ul}) {
    PhaseObject xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (direct_fidelity(xp, y, op.plan(), op.pupil(), subset) -
                       direct_fidelity(xm, y, op.plan(), op.pupil(), subset)) / (2 * h);
    err += (fd - g[i]) * (fd - g[i]);
    ref += g[i] * g[i];
  }
  EXPECT_LT(std::sqrt(err / ref), 1e-6);
}

TEST(Fidelity, WorkerCountDoesNotChangeResults) {
  std::mt19937_64 rng(23);
  auto op = small_operator(rng, true);
  const auto y = op.forward_intensity(random_phase(32, 32, rng));
  const auto x = random_phase(32, 32, rng);
  const auto serial = op.fidelity_and_gradient(x, y, op.all_indices());
  op.set_workers(4);
  const auto parallel = op.fidelity_and_gradient(x, y, op.all_indices());
  EXPECT_EQ(serial.value, parallel.value);
  EXPECT_EQ(serial.gradient, parallel.gradient);
  const auto frames_parallel = op.forward_intensity(x);
  op.set_workers(1);
  EXPECT_EQ(frames_parallel, op.forward_intensity(x));
}

TEST(Fidelity, RejectsBadInputs) {
  std::mt19937_64 rng(24);
  const auto op = small_operator(rng, false);
  auto y = op.forward_intensity(PhaseObject(32, 32));
  const PhaseObject x(32, 32);
  EXPECT_THROW(op.data_fidelity(x, y, std::vector<std::size_t>{}), InvalidArgument);
  EXPECT_THROW(op.data_fidelity(x, y, std::vector<std::size_t>{9}), InvalidArgument);
  y.plan_digest ^= 1;
  EXPECT_THROW(check_digest(y, op.plan()), DigestMismatch);
  y.frames.pop_back();
  EXPECT_THROW(op.data_fidelity(x, y, std::vector<std::size_t>{0}), InvalidArgument);
}
