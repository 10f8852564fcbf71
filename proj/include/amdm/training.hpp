#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "amdm/denoiser.hpp"
#include "amdm/errors.hpp"
#include "amdm/grid.hpp"
#include "amdm/random.hpp"
#include "amdm/sde.hpp"

namespace amdm {

enum class LossWeighting { SigmaSquared };

struct TrainingConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t batch_size = 2;
  std::size_t steps = 2000;
  LossWeighting weighting = LossWeighting::SigmaSquared;

  void validate() const {
    require(learning_rate > 0.0, "learning_rate must be positive");
    require(beta1 > 0.0 && beta1 < 1.0, "beta1 must lie in (0,1)");
    require(beta2 > 0.0 && beta2 < 1.0, "beta2 must lie in (0,1)");
    require(batch_size >= 1, "batch_size must be positive");
  }
};

inline double loss_weight(LossWeighting, double sigma) { return sigma * sigma; }

/// Conditional VE score grad_x log p(x_t | x_0) = -(x_t - x_0) / sigma^2.
inline Tensor3 dsm_target(const Tensor3& x_t, const Tensor3& x0, double sigma) {
  require(x_t.same_shape(x0), "dsm_target: shape mismatch");
  Tensor3 out(x_t.channels(), x_t.height(), x_t.width());
  const double inv = 1.0 / (sigma * sigma);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -(x_t[i] - x0[i]) * inv;
  return out;
}

struct DsmResult {
  double loss = 0.0;
  std::vector<double> gradient;  // empty unless requested
};

/// Denoising score matching: mean over the batch of
/// lambda(t) |s(x_t, t) - grad log p(x_t | x_0)|^2 with t ~ U[0,1] per item.
/// Items are processed in order so the result is deterministic under `rng`.
inline DsmResult dsm_loss(const ScoreModel& model, const std::vector<Tensor3>& batch, const NoiseSchedule& schedule,
                          Rng& rng, bool with_gradient = false, LossWeighting weighting = LossWeighting::SigmaSquared) {
  require(!batch.empty(), "dsm_loss needs a non-empty batch");
  const auto* trainable = dynamic_cast<const TrainableScoreModel*>(&model);
  if (with_gradient && (trainable == nullptr || !model.trainable()))
    throw ValidationError("dsm_loss: gradients requested from non-trainable model '" + model.name() + "'");

  DsmResult res;
  if (with_gradient) res.gradient.assign(trainable->parameters().size(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const Tensor3& x0 : batch) {
    const double t = rng.uniform();
    const double sigma = schedule.sigma(t);
    const double lambda = loss_weight(weighting, sigma);
    Perturbed p = perturb(x0, t, schedule, rng);
    const Tensor3 target = dsm_target(p.x_t, x0, sigma);
    double item = 0.0;
    auto upstream = [&](const Tensor3& s) {
      Tensor3 g(s.channels(), s.height(), s.width());
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double d = s[i] - target[i];
        item += d * d;
        g[i] = 2.0 * lambda * d * inv_b;
      }
      return g;
    };
    if (with_gradient) {
      trainable->evaluate_with_gradient(p.x_t, sigma, upstream, res.gradient);
    } else {
      upstream(model.evaluate(p.x_t, sigma));
    }
    res.loss += lambda * item * inv_b;
  }
  return res;
}

inline DsmResult dsm_loss(const ScoreModel& model, const std::vector<Tensor3>& batch, const NoiseSchedule& schedule,
                          std::uint64_t seed, bool with_gradient = false) {
  Rng rng(seed);
  return dsm_loss(model, batch, schedule, rng, with_gradient);
}

struct TrainingResult {
  std::vector<double> loss_trace;  // loss at each step, before that step's update
};

/// Adam on dsm_loss over reshuffled mini-batches. Deterministic under seed.
inline TrainingResult train(TrainableScoreModel& model, const std::vector<Tensor3>& dataset, const TrainingConfig& cfg,
                            const NoiseSchedule& schedule, std::uint64_t seed) {
  cfg.validate();
  schedule.validate();
  require(!dataset.empty(), "train needs a non-empty dataset");
  Rng rng(seed);
  Adam adam(model.parameters().size(), {cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8});
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  TrainingResult result;
  result.loss_trace.reserve(cfg.steps);
  std::vector<Tensor3> batch;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    batch.clear();
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        cursor = 0;
      }
      batch.push_back(dataset[order[cursor++]]);
    }
    DsmResult r = dsm_loss(model, batch, schedule, rng, true, cfg.weighting);
    if (!std::isfinite(r.loss))
      throw NumericalError("training diverged: non-finite loss at step " + std::to_string(step));
    result.loss_trace.push_back(r.loss);
    adam.step(model.parameters(), r.gradient);
  }
  return result;
}

}  // namespace amdm
