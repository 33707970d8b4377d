#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "fpm/denoisers.hpp"
#include "fpm/selftest.hpp"

using namespace fpm;

namespace {

RealImage random_image(int n1, int n2, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RealImage img(n1, n2);
  for (auto& v : img) v = u(rng);
  return img;
}

std::string fixture(const std::string& args) { return std::string(FPM_PLUGIN_FIXTURE) + " " + args; }

// Straight transcription of the NLM weights, one pixel at a time.
RealImage naive_nlm(const RealImage& img, double sigma, int pr, int wr, double h) {
  const int n1 = img.rows(), n2 = img.cols();
  auto at = [&](int i, int j) { return img(std::clamp(i, 0, n1 - 1), std::clamp(j, 0, n2 - 1)); };
  RealImage out(n1, n2);
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j) {
      double wsum = 0.0, vsum = 0.0, wmax = 0.0;
      for (int di = -wr; di <= wr; ++di)
        for (int dj = -wr; dj <= wr; ++dj) {
          if (di == 0 && dj == 0) continue;
          const int ni = i + di, nj = j + dj;
          if (ni < 0 || ni >= n1 || nj < 0 || nj >= n2) continue;
          double d2 = 0.0;
          for (int a = -pr; a <= pr; ++a)
            for (int b = -pr; b <= pr; ++b) {
              const double d = at(i + a, j + b) - at(ni + a, nj + b);
              d2 += d * d;
            }
          d2 /= (2 * pr + 1) * (2 * pr + 1);
          const double w = std::exp(-d2 / (h * sigma * h * sigma));
          wsum += w;
          vsum += w * img(ni, nj);
          wmax = std::max(wmax, w);
        }
      const double self = wsum > 0 ? wmax : 1.0;
      out(i, j) = (vsum + self * img(i, j)) / (wsum + self);
    }
  return out;
}

}  // namespace

TEST(Sigma, FromStep) {
  EXPECT_DOUBLE_EQ(sigma_from_step(0.08, 0.03), std::sqrt(0.0024));
  EXPECT_EQ(sigma_from_step(1.0, 0.0), 0.0);
  EXPECT_THROW(sigma_from_step(0.0, 1.0), InvalidArgument);
  EXPECT_THROW(sigma_from_step(1.0, -1.0), InvalidArgument);
}

TEST(Identity, ReturnsInputBitExact) {
  const auto z = random_image(9, 7, 1);
  DenoiserSpec spec;
  EXPECT_EQ(denoise(spec, {z, 0.7}), z);
}

TEST(Tv, ZeroWeightIsIdentity) {
  const auto z = random_image(8, 8, 2);
  EXPECT_EQ(tv_denoise(z, 0.0), z);
  DenoiserSpec spec;
  spec.kind = DenoiserKind::tv;
  EXPECT_EQ(denoise(spec, {z, 0.0}), z);
}

TEST(Tv, ConstantImageIsFixed) {
  const RealImage z(6, 5, 0.37);
  for (double w : {0.01, 1.0, 100.0}) EXPECT_LT(max_abs_diff(tv_denoise(z, w), z), 1e-15);
}

TEST(Tv, TwoPixelClosedForm) {
  // prox of w|b - a|: move both ends together by w, or meet at the mean.
  for (auto [a, b, w] : {std::tuple{0.0, 1.0, 0.1}, {0.0, 1.0, 0.6}, {2.0, -1.0, 0.5}, {0.3, 0.3, 1.0}}) {
    const RealImage z(1, 2, {a, b});
    const auto x = tv_denoise(z, w, 5000, 1e-15);
    const double gap = std::abs(b - a);
    double xa, xb;
    if (gap / 2 > w) {
      const double s = b > a ? w : -w;
      xa = a + s;
      xb = b - s;
    } else {
      xa = xb = 0.5 * (a + b);
    }
    EXPECT_NEAR(x[0], xa, 1e-9) << a << " " << b << " " << w;
    EXPECT_NEAR(x[1], xb, 1e-9) << a << " " << b << " " << w;
  }
}

TEST(Tv, LargeWeightFlattensToMean) {
  const auto z = random_image(8, 8, 3);
  const auto x = tv_denoise(z, 50.0, 5000, 1e-15);
  const double m = mean(z);
  for (double v : x) EXPECT_NEAR(v, m, 1e-6);
}

TEST(Tv, PreservesMean) {
  const auto z = random_image(16, 12, 4);
  for (double w : {0.01, 0.1, 1.0}) EXPECT_NEAR(mean(tv_denoise(z, w, 200)), mean(z), 1e-13);
}

TEST(Tv, MatchesAdmmOracle) {
  for (int n = 0; n < 6; ++n) {
    const auto z = random_image(5, 5, 100 + n);
    for (double w : {0.01, 0.1, 1.0}) {
      const auto ours = tv_denoise(z, w, 5000, 1e-15);
      const auto ref = oracle::tv_prox_admm(z, w);
      const long double gap = oracle::tv_objective_ld(ours, z, w) - oracle::tv_objective_ld(ref, z, w);
      EXPECT_LT(static_cast<double>(gap), 1e-9) << "instance " << n << " weight " << w;
      EXPECT_LT(max_abs_diff(ours, ref), 1e-4);
    }
  }
}

TEST(Tv, NotWorseThanInputOrPerturbations) {
  const auto z = random_image(10, 10, 5);
  const double w = 0.05;
  const auto x = tv_denoise(z, w, 2000, 1e-12);
  const double fx = tv_objective(x, z, w);
  EXPECT_LE(fx, tv_objective(z, z, w));
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1e-3);
  for (int t = 0; t < 20; ++t) {
    RealImage p = x;
    for (auto& v : p) v += n(rng);
    EXPECT_LE(fx, tv_objective(p, z, w) + 1e-12);
  }
}

TEST(Tv, RejectsBadInput) {
  RealImage z(3, 3);
  EXPECT_THROW(tv_denoise(z, -1.0), InvalidArgument);
  z[4] = std::nan("");
  EXPECT_THROW(tv_denoise(z, 1.0), InvalidArgument);
}

TEST(Nlm, ConstantImageIsFixed) {
  const RealImage z(12, 10, -0.25);
  const auto x = nlm_denoise(z, 0.3, 1, 3, 1.0);
  EXPECT_LT(max_abs_diff(x, z), 1e-15);
}

TEST(Nlm, ZeroSigmaIsIdentity) {
  const auto z = random_image(8, 8, 7);
  EXPECT_EQ(nlm_denoise(z, 0.0, 1, 3, 1.0), z);
}

TEST(Nlm, MatchesNaiveLoops) {
  const auto z = random_image(8, 8, 8);
  for (auto [pr, wr, h] : {std::tuple{1, 3, 1.0}, {2, 2, 0.5}, {1, 5, 2.0}}) {
    const auto fast = nlm_denoise(z, 0.2, pr, wr, h);
    const auto slow = naive_nlm(z, 0.2, pr, wr, h);
    EXPECT_LT(max_abs_diff(fast, slow), 1e-12) << pr << " " << wr;
  }
}

TEST(Nlm, ReducesNoiseOnFlatRegions) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 0.1);
  RealImage z(32, 32);
  for (auto& v : z) v = 0.5 + n(rng);
  const auto x = nlm_denoise(z, 0.1, 1, 3, 1.0);
  double ez = 0, ex = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    ez += (z[i] - 0.5) * (z[i] - 0.5);
    ex += (x[i] - 0.5) * (x[i] - 0.5);
  }
  EXPECT_LT(ex, 0.5 * ez);
}

TEST(External, CopyRoundTripsBitExact) {
  const auto z = random_image(7, 9, 10);
  EXPECT_EQ(denoise_external(fixture("copy"), z, 0.1), z);
}

TEST(External, AddOne) {
  const auto z = random_image(4, 4, 11);
  const auto x = denoise_external(fixture("add-one"), z, 0.1);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(x[i], z[i] + 1.0);
}

TEST(External, FailureCarriesStatusAndStderr) {
  const auto z = random_image(4, 4, 12);
  try {
    denoise_external(fixture("fail"), z, 0.1);
    FAIL() << "expected PluginError";
  } catch (const PluginError& e) {
    EXPECT_EQ(e.exit_code(), 3);
    EXPECT_NE(e.stderr_text().find("asked to fail"), std::string::npos);
  }
}

TEST(External, TimeoutKillsThePlugin) {
  const auto z = random_image(4, 4, 13);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    denoise_external(fixture("sleep"), z, 0.1, std::chrono::milliseconds(300));
    FAIL() << "expected PluginError";
  } catch (const PluginError& e) {
    EXPECT_NE(std::string(e.what()).find("timed out"), std::string::npos) << e.what();
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 10.0);
}

TEST(External, MalformedOrReshapedOutputIsRejected) {
  const auto z = random_image(4, 4, 14);
  EXPECT_THROW(denoise_external(fixture("garbage"), z, 0.1), PluginError);
  EXPECT_THROW(denoise_external(fixture("reshape"), z, 0.1), PluginError);
}

TEST(External, MissingProgramIsAPluginError) {
  EXPECT_THROW(denoise_external("/nonexistent/denoiser", random_image(2, 2, 15), 0.1), PluginError);
}

TEST(External, SigmaIsSubstitutedRoundTrippable) {
  const auto z = random_image(3, 3, 16);
  for (double sigma : {0.125, 0.1, std::sqrt(0.08 * 0.03)}) {
    const auto x = denoise_external(fixture("echo-sigma {sigma}"), z, sigma);
    for (double v : x) EXPECT_EQ(v, sigma);
  }
  EXPECT_EQ(substitute_sigma("a {sigma} b {sigma}", 0.5), "a 0.5 b 0.5");
  EXPECT_EQ(std::stod(format_sigma(0.1)), 0.1);
}

TEST(DenoiserSpec, Validation) {
  DenoiserSpec s;
  s.kind = DenoiserKind::external;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = {};
  s.inner_iterations = 0;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = {};
  EXPECT_THROW(denoise(s, {RealImage(2, 2), -1.0}), InvalidArgument);
}
