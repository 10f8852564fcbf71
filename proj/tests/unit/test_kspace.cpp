#include <gtest/gtest.h>

#include <cmath>

#include "amdm/kspace.hpp"
#include "amdm/metrics.hpp"
#include "amdm/patterns.hpp"
#include "amdm/phantom.hpp"
#include "oracles.hpp"

using namespace amdm;

TEST(Grid, RejectsNonFiniteAndWrongLength) {
  EXPECT_THROW(ComplexGrid(2, 2, std::vector<cplx>(3)), ValidationError);
  std::vector<cplx> v(4);
  v[2] = {std::nan(""), 0.0};
  EXPECT_THROW(ComplexGrid(2, 2, v), ValidationError);
}

TEST(Fft, MatchesDirectSummation) {
  for (auto [h, w] : {std::pair{8, 8}, std::pair{6, 10}, std::pair{5, 7}}) {
    const auto x = oracle::random_grid(h, w, 11 + h);
    EXPECT_LT(oracle::rel_err(fft2c(x), oracle::naive_fft2c(x)), 1e-12) << h << "x" << w;
    EXPECT_LT(oracle::rel_err(ifft2c(x), oracle::naive_fft2c(x, true)), 1e-12);
  }
}

TEST(Fft, RoundTripAndParseval) {
  const auto x = oracle::random_grid(8, 8, 1);
  EXPECT_LT(oracle::rel_err(ifft2c(fft2c(x)), x), 1e-12);
  for (int s = 0; s < 20; ++s) {
    const auto y = oracle::random_grid(16, 16, 100 + s);
    EXPECT_NEAR(l2_norm(fft2c(y)), l2_norm(y), 1e-12 * l2_norm(y));
  }
}

TEST(Fft, ConstantImageHasOnlyCenteredDc) {
  const cplx c{0.7, -0.2};
  const ComplexGrid img(6, 8, c);
  const auto k = fft2c(img);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t q = 0; q < 8; ++q) {
      if (r == 3 && q == 4) EXPECT_LT(std::abs(k(r, q) - c * std::sqrt(48.0)), 1e-12);
      else EXPECT_LT(std::abs(k(r, q)), 1e-12);
    }
}

TEST(Fft, RejectsNonFiniteAndTinyGrids) {
  EXPECT_THROW(fft2c(ComplexGrid(1, 8)), ValidationError);
}

TEST(SamplingMask, RejectsEmptyAndNonBinary) {
  EXPECT_THROW(SamplingMask(BinaryGrid(4, 4, 0)), ValidationError);
  EXPECT_THROW(SamplingMask(BinaryGrid(4, 4, 2)), ValidationError);
  EXPECT_DOUBLE_EQ(SamplingMask::full(4, 4).acceleration(), 1.0);
}

TEST(ApplySampling, FullMaskNoNoiseIsIdentity) {
  const auto k = oracle::random_grid(8, 8, 2);
  const auto m = apply_sampling(k, SamplingMask::full(8, 8), 0.0, 0);
  EXPECT_EQ(m.y, k);
}

TEST(ApplySampling, SingleEntryMask) {
  const auto k = oracle::random_grid(8, 8, 3);
  BinaryGrid g(8, 8);
  g(2, 5) = 1;
  const auto m = apply_sampling(k, SamplingMask(g), 0.0, 0);
  std::size_t nz = 0;
  for (const auto& v : m.y) nz += v != cplx{};
  EXPECT_EQ(nz, 1u);
  EXPECT_EQ(m.y(2, 5), k(2, 5));
}

TEST(ApplySampling, DeterministicNoiseOnSampledOnly) {
  const auto k = oracle::random_grid(16, 16, 4);
  const auto mask = generate_pattern({PatternKind::Random2D, 3.0, 0.1, 5}, 16, 16);
  const auto a = apply_sampling(k, mask, 0.1, 9);
  const auto b = apply_sampling(k, mask, 0.1, 9);
  EXPECT_EQ(a.y, b.y);
  EXPECT_NO_THROW(a.validate());
  EXPECT_NE(apply_sampling(k, mask, 0.1, 10).y, a.y);
}

TEST(ApplySampling, NoiseVarianceSplitsAcrossComponents) {
  const ComplexGrid k(64, 64);
  const auto m = apply_sampling(k, SamplingMask::full(64, 64), 0.2, 1);
  double re2 = 0.0, im2 = 0.0;
  for (const auto& v : m.y) {
    re2 += v.real() * v.real();
    im2 += v.imag() * v.imag();
  }
  const double n = 4096.0;
  EXPECT_NEAR(re2 / n, 0.02, 0.002);
  EXPECT_NEAR(im2 / n, 0.02, 0.002);
}

TEST(ApplySampling, LinearWithoutNoise) {
  const auto k1 = oracle::random_grid(8, 8, 5), k2 = oracle::random_grid(8, 8, 6);
  const auto mask = generate_pattern({PatternKind::Random2D, 2.0, 0.0, 1}, 8, 8);
  const cplx a{1.5, 0.5}, b{-0.25, 2.0};
  const auto lhs = apply_sampling(a * k1 + b * k2, mask, 0.0, 0).y;
  const auto rhs = a * apply_sampling(k1, mask, 0.0, 0).y + b * apply_sampling(k2, mask, 0.0, 0).y;
  EXPECT_LT(oracle::max_abs_diff(lhs, rhs), 1e-12);
}

TEST(ApplySampling, ShapeMismatchThrows) {
  EXPECT_THROW(apply_sampling(ComplexGrid(4, 4), SamplingMask::full(4, 5), 0.0, 0), ValidationError);
}

TEST(ZeroFilled, FullySampledIsExact) {
  const auto img = oracle::random_grid(8, 8, 7);
  const auto m = apply_sampling(fft2c(img), SamplingMask::full(8, 8), 0.0, 0);
  EXPECT_LT(oracle::max_abs_diff(zero_filled(m), img), 1e-12);
}

TEST(ZeroFilled, SingleFrequencyHasConstantMagnitude) {
  const auto k = oracle::random_grid(8, 8, 8);
  BinaryGrid g(8, 8);
  g(1, 6) = 1;
  const auto zf = zero_filled(apply_sampling(k, SamplingMask(g), 0.0, 0));
  const double m0 = std::abs(zf[0]);
  for (const auto& v : zf) EXPECT_NEAR(std::abs(v), m0, 1e-12);
}

TEST(ZeroFilled, ReproducesMeasuredFrequencies) {
  const auto k = oracle::random_grid(16, 16, 9);
  const auto mask = generate_pattern({PatternKind::Random2D, 4.0, 0.1, 2}, 16, 16);
  const auto meas = apply_sampling(k, mask, 0.0, 0);
  const auto back = fft2c(zero_filled(meas));
  for (std::size_t i = 0; i < k.size(); ++i)
    if (mask.grid()[i]) {
      EXPECT_LT(std::abs(back[i] - meas.y[i]), 1e-12);
    }
}

// Regression value frozen from the first verified run.
TEST(ZeroFilled, SheppLoganRandomR4BelowFullySampled) {
  const auto img = make_phantom(PhantomKind::SheppLogan, 64, 0);
  const auto k = fft2c(img);
  const auto mask = generate_pattern({PatternKind::Random2D, 4.0, 0.04, derive_seed(0, "pattern")}, 64, 64);
  const double zf = evaluate(zero_filled(apply_sampling(k, mask, 0.0, 0)), img).psnr;
  const double full = evaluate(zero_filled(apply_sampling(k, SamplingMask::full(64, 64), 0.0, 0)), img).psnr;
  EXPECT_LT(zf, full);
  EXPECT_NEAR(zf, 15.46, 0.01);
}
