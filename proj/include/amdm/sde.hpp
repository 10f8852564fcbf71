#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>

#include "amdm/errors.hpp"
#include "amdm/grid.hpp"
#include "amdm/random.hpp"

namespace amdm {

// Variance-exploding schedule sigma(t) = sigma_min (sigma_max / sigma_min)^t.
//
// The sampler walks a discrete ladder of n_scales levels: level j (1..n)
// sits at t_j = (j - 1) / (n - 1), so level 1 is sigma_min and level n is
// sigma_max. Level 0 is the noise-free endpoint with sigma = 0.
struct NoiseSchedule {
  double sigma_min = 0.01;
  double sigma_max = 378.0;
  std::size_t n_scales = 1000;

  void validate() const {
    require(sigma_min > 0.0, "sigma_min must be positive");
    require(sigma_min < sigma_max, "sigma_min must be below sigma_max");
    require(n_scales >= 1, "n_scales must be positive");
  }

  double sigma(double t) const {
    require(t >= 0.0 && t <= 1.0, "diffusion time t must lie in [0,1], got " + std::to_string(t));
    return sigma_min * std::pow(sigma_max / sigma_min, t);
  }

  double level_t(std::size_t j) const {
    require(j >= 1 && j <= n_scales, "noise level index out of range");
    if (n_scales == 1) return 1.0;
    return static_cast<double>(j - 1) / static_cast<double>(n_scales - 1);
  }

  double level_sigma(std::size_t j) const { return j == 0 ? 0.0 : sigma(level_t(j)); }
};

// Pluggable score function s(x, sigma) ~ grad_x log p_sigma(x).
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual Tensor3 evaluate(const Tensor3& x, double sigma) const = 0;
  virtual bool trainable() const { return false; }
  virtual std::string name() const = 0;
  // Plane count the model accepts, 0 if any.
  virtual std::size_t input_planes() const { return 0; }
};

// Exact score of N(mean, base_var I) perturbed by VE noise of scale sigma.
class AnalyticGaussianScore final : public ScoreModel {
 public:
  AnalyticGaussianScore(Tensor3 mean, double base_var) : mean_(std::move(mean)), base_var_(base_var) {
    require(base_var > 0.0, "analytic score base variance must be positive");
  }

  Tensor3 evaluate(const Tensor3& x, double sigma) const override {
    require(x.same_shape(mean_), "analytic score: input " + x.shape() + " does not match mean " + mean_.shape());
    Tensor3 out(x.channels(), x.height(), x.width());
    const double inv = 1.0 / (base_var_ + sigma * sigma);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = -(x[i] - mean_[i]) * inv;
    return out;
  }

  std::string name() const override { return "analytic-gaussian"; }
  std::size_t input_planes() const override { return mean_.channels(); }
  const Tensor3& mean() const { return mean_; }
  double base_var() const { return base_var_; }

 private:
  Tensor3 mean_;
  double base_var_;
};

inline std::shared_ptr<AnalyticGaussianScore> analytic_gaussian_score(Tensor3 mean, double base_var) {
  return std::make_shared<AnalyticGaussianScore>(std::move(mean), base_var);
}

inline Tensor3 normal_like(const Tensor3& x, Rng& rng) {
  Tensor3 z(x.channels(), x.height(), x.width());
  rng.fill_normal(z.values());
  return z;
}

struct Perturbed {
  Tensor3 x_t;
  Tensor3 noise;  // the standard-normal Z with x_t = x0 + sigma(t) Z
};

inline Perturbed perturb(const Tensor3& x0, double t, const NoiseSchedule& schedule, Rng& rng) {
  const double s = schedule.sigma(t);
  Perturbed p{x0, normal_like(x0, rng)};
  for (std::size_t i = 0; i < x0.size(); ++i) p.x_t[i] += s * p.noise[i];
  return p;
}

inline Perturbed perturb(const Tensor3& x0, double t, const NoiseSchedule& schedule, std::uint64_t seed) {
  Rng rng(seed);
  return perturb(x0, t, schedule, rng);
}

/// x + dsig2 * score + sqrt(dsig2) * z
inline Tensor3 predictor_update(const Tensor3& x, const Tensor3& score, double dsig2, const Tensor3& z) {
  require(x.same_shape(score) && x.same_shape(z), "predictor: shape mismatch");
  require(dsig2 >= 0.0, "predictor: variance increment must be nonnegative");
  Tensor3 out = x;
  const double g = std::sqrt(dsig2);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += dsig2 * score[i] + g * z[i];
  return out;
}

/// Reverse-diffusion step from ladder level j down to level j - 1.
inline Tensor3 predictor_step(const Tensor3& x, std::size_t level, const ScoreModel& model,
                              const NoiseSchedule& schedule, Rng& rng) {
  require(level >= 1 && level <= schedule.n_scales, "predictor level out of range");
  const double hi = schedule.level_sigma(level);
  const double lo = schedule.level_sigma(level - 1);
  const Tensor3 score = model.evaluate(x, hi);
  const Tensor3 z = normal_like(x, rng);
  return predictor_update(x, score, hi * hi - lo * lo, z);
}

/// Langevin step size eps = 2 (snr |z| / |score|)^2, zero when the score vanishes.
inline double corrector_step_size(const Tensor3& score, const Tensor3& z, double snr) {
  const double sn = l2_norm(score.values());
  if (sn == 0.0) return 0.0;
  const double r = snr * l2_norm(z.values()) / sn;
  return 2.0 * r * r;
}

inline Tensor3 corrector_update(const Tensor3& x, const Tensor3& score, const Tensor3& z, double snr) {
  require(snr > 0.0, "corrector snr must be positive");
  require(x.same_shape(score) && x.same_shape(z), "corrector: shape mismatch");
  const double eps = corrector_step_size(score, z, snr);
  Tensor3 out = x;
  const double g = std::sqrt(2.0 * eps);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += eps * score[i] + g * z[i];
  return out;
}

/// Langevin correction at ladder level j.
inline Tensor3 corrector_step(const Tensor3& x, std::size_t level, const ScoreModel& model,
                              const NoiseSchedule& schedule, double snr, Rng& rng) {
  require(level >= 1 && level <= schedule.n_scales, "corrector level out of range");
  const Tensor3 score = model.evaluate(x, schedule.level_sigma(level));
  const Tensor3 z = normal_like(x, rng);
  return corrector_update(x, score, z, snr);
}

/// One predictor step from level j followed by `corrector_loops` Langevin
/// corrections at the level just reached (clamped to level 1).
inline Tensor3 pc_step(const Tensor3& x, std::size_t level, const ScoreModel& model, const NoiseSchedule& schedule,
                       double snr, int corrector_loops, Rng& rng) {
  Tensor3 out = predictor_step(x, level, model, schedule, rng);
  const std::size_t target = level > 1 ? level - 1 : 1;
  for (int m = 0; m < corrector_loops; ++m) out = corrector_step(out, target, model, schedule, snr, rng);
  return out;
}

/// Unconditional PC sampling over the full ladder starting from `init`.
inline Tensor3 pc_sample(const ScoreModel& model, const NoiseSchedule& schedule, Tensor3 init, double snr,
                         int corrector_loops, Rng& rng) {
  schedule.validate();
  for (std::size_t j = schedule.n_scales; j >= 1; --j)
    init = pc_step(init, j, model, schedule, snr, corrector_loops, rng);
  return init;
}

}  // namespace amdm
