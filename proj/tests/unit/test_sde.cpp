#include <gtest/gtest.h>

#include <cmath>

#include "amdm/sde.hpp"
#include "amdm/training.hpp"

using namespace amdm;

namespace {

class ConstantScore final : public ScoreModel {
 public:
  explicit ConstantScore(double c) : c_(c) {}
  Tensor3 evaluate(const Tensor3& x, double) const override {
    Tensor3 out(x.channels(), x.height(), x.width());
    for (double& v : out.values()) v = c_;
    return out;
  }
  std::string name() const override { return "constant"; }

 private:
  double c_;
};

// Returns exactly the DSM target for a known x0: -(x - x0) / sigma^2.
class OracleScore final : public ScoreModel {
 public:
  explicit OracleScore(Tensor3 x0) : x0_(std::move(x0)) {}
  Tensor3 evaluate(const Tensor3& x, double sigma) const override { return dsm_target(x, x0_, sigma); }
  std::string name() const override { return "oracle"; }

 private:
  Tensor3 x0_;
};

Tensor3 filled(std::size_t c, std::size_t h, std::size_t w, double v) {
  Tensor3 t(c, h, w);
  for (double& x : t.values()) x = v;
  return t;
}

}  // namespace

TEST(Schedule, EndpointsAndMidpoint) {
  const NoiseSchedule s;
  EXPECT_DOUBLE_EQ(s.sigma(0.0), 0.01);
  EXPECT_NEAR(s.sigma(1.0), 378.0, 1e-12);
  EXPECT_NEAR(s.sigma(0.5), std::sqrt(0.01 * 378.0), 1e-12);
  EXPECT_NEAR(s.sigma(0.5), 1.94422, 1e-5);
  EXPECT_THROW(s.sigma(-0.1), ValidationError);
  EXPECT_THROW(s.sigma(1.5), ValidationError);
}

TEST(Schedule, LadderStrictlyIncreasing) {
  const NoiseSchedule s;
  EXPECT_EQ(s.level_sigma(0), 0.0);
  EXPECT_DOUBLE_EQ(s.level_sigma(1), 0.01);
  for (std::size_t j = 1; j < s.n_scales; ++j) EXPECT_LT(s.level_sigma(j), s.level_sigma(j + 1));
  EXPECT_THROW((NoiseSchedule{1.0, 0.5, 10}.validate()), ValidationError);
}

TEST(Perturb, DeterministicAndVarianceMatches) {
  const NoiseSchedule s;
  const Tensor3 x0 = filled(2, 4, 4, 0.3);
  EXPECT_EQ(perturb(x0, 0.4, s, 7).x_t, perturb(x0, 0.4, s, 7).x_t);
  const auto p0 = perturb(x0, 0.0, s, 1);
  for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(p0.x_t[i] - x0[i], 0.01 * p0.noise[i], 1e-15);

  const Tensor3 big(1, 100, 1000);
  const double sig = s.sigma(0.3);
  const auto p = perturb(big, 0.3, s, 3);
  double m2 = 0.0;
  for (double v : p.x_t.values()) m2 += v * v;
  EXPECT_NEAR(m2 / 1e5, sig * sig, 0.02 * sig * sig);
}

TEST(Dsm, TargetIdentity) {
  Tensor3 xt(1, 1, 2), x0(1, 1, 2);
  xt[0] = 3.0;
  xt[1] = -1.0;
  x0[0] = 1.0;
  x0[1] = 1.0;
  const auto t = dsm_target(xt, x0, 2.0);
  EXPECT_DOUBLE_EQ(t[0], -0.5);
  EXPECT_DOUBLE_EQ(t[1], 0.5);
}

TEST(Dsm, PerfectScoreGivesZeroLoss) {
  const Tensor3 x0 = filled(2, 4, 4, 0.5);
  const OracleScore model(x0);
  EXPECT_NEAR(dsm_loss(model, {x0, x0}, NoiseSchedule{}, 5).loss, 0.0, 1e-18);
}

TEST(Dsm, ZeroModelLossIsElementCount) {
  const ConstantScore zero(0.0);
  const Tensor3 x0 = filled(2, 8, 8, 0.1);
  double total = 0.0;
  const int trials = 400;
  for (int s = 0; s < trials; ++s) total += dsm_loss(zero, {x0}, NoiseSchedule{}, static_cast<std::uint64_t>(s)).loss;
  EXPECT_NEAR(total / trials, 128.0, 0.05 * 128.0);
}

TEST(Dsm, GradientRequestOnFixedModelThrows) {
  const ConstantScore zero(0.0);
  EXPECT_THROW(dsm_loss(zero, {filled(1, 2, 2, 0.0)}, NoiseSchedule{}, 1, true), ValidationError);
  EXPECT_THROW(dsm_loss(zero, {}, NoiseSchedule{}, 1), ValidationError);
}

TEST(Predictor, UpdateFormula) {
  const Tensor3 x = filled(1, 3, 3, 1.0);
  const Tensor3 zero(1, 3, 3);
  EXPECT_EQ(predictor_update(x, zero, 5.0, zero), x);
  const Tensor3 c = filled(1, 3, 3, 0.25);
  const auto out = predictor_update(x, c, 3.0, zero);
  for (double v : out.values()) EXPECT_DOUBLE_EQ(v, 1.75);
}

TEST(Corrector, ZeroScoreIsIdentity) {
  const ConstantScore zero(0.0);
  const Tensor3 x = filled(2, 4, 4, 0.7);
  Rng rng(1);
  EXPECT_EQ(corrector_step(x, 3, zero, NoiseSchedule{}, 0.16, rng), x);
}

TEST(Corrector, StepSizeRule) {
  Tensor3 s(1, 1, 2), z(1, 1, 2);
  s[0] = 3.0;
  s[1] = 4.0;
  z[0] = 1.0;
  z[1] = 0.0;
  EXPECT_DOUBLE_EQ(corrector_step_size(s, z, 0.5), 2.0 * (0.5 * 1.0 / 5.0) * (0.5 * 1.0 / 5.0));
}

TEST(Corrector, Deterministic) {
  const auto model = analytic_gaussian_score(filled(1, 4, 4, 1.0), 1.0);
  const Tensor3 x = filled(1, 4, 4, -2.0);
  Rng a(9), b(9);
  EXPECT_EQ(corrector_step(x, 10, *model, NoiseSchedule{}, 0.16, a), corrector_step(x, 10, *model, NoiseSchedule{}, 0.16, b));
}

TEST(AnalyticScore, Basics) {
  const Tensor3 mean = filled(1, 2, 2, 0.5);
  const auto m = analytic_gaussian_score(mean, 1.0);
  const auto at_mean = m->evaluate(mean, 3.0);
  for (double v : at_mean.values()) EXPECT_EQ(v, 0.0);
  Tensor3 x = mean;
  x[2] += 1.0;
  const auto s = m->evaluate(x, 0.0);
  EXPECT_DOUBLE_EQ(s[2], -1.0);
  EXPECT_DOUBLE_EQ(s[0], 0.0);
  EXPECT_THROW(analytic_gaussian_score(mean, 0.0), ValidationError);
  EXPECT_EQ(m->input_planes(), 1u);
}

TEST(AnalyticScore, BeatsZeroModelOnItsOwnData) {
  const Tensor3 mean = filled(2, 4, 4, 1.0);
  const double base_var = 0.5;
  const auto model = analytic_gaussian_score(mean, base_var);
  const ConstantScore zero(0.0);
  Rng data(3);
  double la = 0.0, lz = 0.0;
  for (int b = 0; b < 500; ++b) {
    std::vector<Tensor3> batch;
    for (int i = 0; i < 2; ++i) {
      Tensor3 x = mean;
      for (double& v : x.values()) v += std::sqrt(base_var) * data.normal();
      batch.push_back(x);
    }
    la += dsm_loss(*model, batch, NoiseSchedule{}, static_cast<std::uint64_t>(b)).loss;
    lz += dsm_loss(zero, batch, NoiseSchedule{}, static_cast<std::uint64_t>(b)).loss;
  }
  EXPECT_LT(la, lz);
}

TEST(Predictor, AnalyticMeanRecovered) {
  // Predictor-only reverse diffusion over 500 levels toward N(mu, I).
  const double mu = 2.0;
  const auto model = analytic_gaussian_score(filled(1, 1, 1, mu), 1.0);
  const NoiseSchedule s{0.01, 378.0, 500};
  Rng rng(11);
  double sum = 0.0;
  const int n = 2000;
  for (int k = 0; k < n; ++k) {
    Tensor3 x(1, 1, 1);
    x[0] = 378.0 * rng.normal();
    for (std::size_t j = s.n_scales; j >= 1; --j) x = predictor_step(x, j, *model, s, rng);
    sum += x[0];
  }
  EXPECT_NEAR(sum / n, mu, 0.05 * mu);
}

TEST(Corrector, LangevinStationaryMean) {
  // Batched chains so the step-size rule sees many dimensions.
  const double mu = 1.5;
  const auto model = analytic_gaussian_score(filled(1, 64, 64, mu), 1.0);
  const NoiseSchedule s;
  Rng rng(12);
  Tensor3 x = filled(1, 64, 64, -4.0);
  for (int it = 0; it < 1000; ++it) x = corrector_step(x, 1, *model, s, 0.16, rng);
  double m = 0.0;
  for (double v : x.values()) m += v;
  EXPECT_NEAR(m / 4096.0, mu, 0.05 * mu);
}

TEST(PcSample, DeterministicUnderSeed) {
  const auto model = analytic_gaussian_score(filled(2, 4, 4, 0.0), 1.0);
  const NoiseSchedule s{0.01, 378.0, 50};
  Rng a(4), b(4);
  const Tensor3 init = filled(2, 4, 4, 10.0);
  EXPECT_EQ(pc_sample(*model, s, init, 0.16, 1, a), pc_sample(*model, s, init, 0.16, 1, b));
}
