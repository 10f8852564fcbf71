#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "amdm/adaptive_mask.hpp"
#include "amdm/channel_stack.hpp"
#include "amdm/errors.hpp"
#include "amdm/grid.hpp"
#include "amdm/io.hpp"
#include "amdm/kspace.hpp"
#include "amdm/metrics.hpp"
#include "amdm/random.hpp"
#include "amdm/sde.hpp"
#include "amdm/wavelet.hpp"

namespace amdm {

/// k + m (k_model - m k) for a binary mask: the model output inside the
/// support, k bit-for-bit outside it.
inline ComplexGrid masked_model_update(const ComplexGrid& k, const ComplexGrid& k_model, const BinaryGrid& m) {
  require_same_shape(k, k_model, "masked_model_update");
  require_same_shape(k, m, "masked_model_update");
  ComplexGrid out = k;
  for (std::size_t i = 0; i < k.size(); ++i)
    if (m[i]) out[i] = k_model[i];
  return out;
}

inline ComplexGrid masked_model_update(const ComplexGrid& k, const ComplexGrid& k_model, const AdaptiveMask& m) {
  return masked_model_update(k, k_model, m.grid);
}

/// Elementwise minimizer of |m k - y|^2 + mu |k - k_est|^2.
inline ComplexGrid data_consistency(const ComplexGrid& k_est, const Measurement& meas, double mu) {
  require(mu >= 0.0 && std::isfinite(mu), "data consistency weight mu must be a finite nonnegative number");
  require_same_shape(k_est, meas.y, "data_consistency");
  ComplexGrid out = k_est;
  const BinaryGrid& m = meas.mask.grid();
  if (mu == 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i)
      if (m[i]) out[i] = meas.y[i];
    return out;
  }
  const double inv = 1.0 / (1.0 + mu);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (m[i]) out[i] = (meas.y[i] + mu * k_est[i]) * inv;
  return out;
}

enum class Recombine { Mean, MaskWeighted };
enum class DcMode { PerIteration, OnceAtEnd };

inline std::string to_string(Recombine r) { return r == Recombine::Mean ? "mean" : "mask-weighted"; }
inline std::string to_string(DcMode d) { return d == DcMode::PerIteration ? "per-iteration" : "once-at-end"; }

inline Recombine parse_recombine(const std::string& s) {
  if (s == "mean") return Recombine::Mean;
  if (s == "mask-weighted") return Recombine::MaskWeighted;
  throw ValidationError("unknown recombine mode '" + s + "' (expected mean or mask-weighted)");
}

inline DcMode parse_dc_mode(const std::string& s) {
  if (s == "per-iteration") return DcMode::PerIteration;
  if (s == "once-at-end") return DcMode::OnceAtEnd;
  throw ValidationError("unknown dc mode '" + s + "' (expected per-iteration or once-at-end)");
}

struct ReconConfig {
  double mu = 0.0;
  std::size_t outer_steps = 200;  // T
  int corrector_loops = 1;        // M
  double snr = 0.16;
  NoiseSchedule schedule;  // sigma range only; the ladder has 2T levels
  WaveletSpec wavelet;
  MaskRanges mask_ranges = MaskRanges::defaults(2);
  ChannelLayout layout_d1 = amdm::layout_d1();
  ChannelLayout layout_d2 = amdm::layout_d2();
  Recombine recombine = Recombine::Mean;
  DcMode dc_mode = DcMode::PerIteration;
  std::uint64_t seed = 0;

  void validate() const {
    require(outer_steps >= 1, "outer_steps T must be at least 1");
    require(corrector_loops >= 1, "corrector_loops M must be at least 1");
    require(snr > 0.0, "snr must be positive");
    require(mu >= 0.0 && std::isfinite(mu), "mu must be a finite nonnegative number");
    schedule.validate();
    require(layout_d1.n_high == mask_ranges.highs.size() && layout_d2.n_high == mask_ranges.highs.size(),
            "channel layouts must have one high channel per high mask range");
  }

  // Two half-steps (D1 then D2) per outer iteration.
  NoiseSchedule ladder() const { return {schedule.sigma_min, schedule.sigma_max, 2 * outer_steps}; }

  io::KeyValues describe() const {
    io::KeyValues kv{{"mu", io::fmt_double(mu)},
                     {"T", std::to_string(outer_steps)},
                     {"M", std::to_string(corrector_loops)},
                     {"snr", io::fmt_double(snr)},
                     {"sigma_min", io::fmt_double(schedule.sigma_min)},
                     {"sigma_max", io::fmt_double(schedule.sigma_max)},
                     {"wavelet", to_string(wavelet.family)},
                     {"wavelet_levels", std::to_string(wavelet.levels)},
                     {"low_range", io::fmt_double(mask_ranges.low.lo) + ":" + io::fmt_double(mask_ranges.low.hi)}};
    for (std::size_t i = 0; i < mask_ranges.highs.size(); ++i)
      kv.emplace_back("high_range_" + std::to_string(i + 1),
                      io::fmt_double(mask_ranges.highs[i].lo) + ":" + io::fmt_double(mask_ranges.highs[i].hi));
    kv.emplace_back("layout_d1", to_string(layout_d1.low_slot));
    kv.emplace_back("layout_d2", to_string(layout_d2.low_slot));
    kv.emplace_back("recombine", to_string(recombine));
    kv.emplace_back("dc_mode", to_string(dc_mode));
    kv.emplace_back("seed", std::to_string(seed));
    return kv;
  }
};

struct IterationMetrics {
  std::size_t iteration = 0;  // 1-based, in execution order
  MetricsRow row;
};

struct ReconState {
  StackedTensor tensor;  // channels after the last iteration, layout_d1 order
  HybridMaskSet masks;
  std::size_t iteration = 0;
  std::vector<IterationMetrics> trace;
};

struct ReconResult {
  ComplexGrid k_final;
  ComplexGrid image;
  ReconState state;
};

inline std::string metrics_trace_csv(const std::vector<IterationMetrics>& trace) {
  std::string out = "iteration,psnr,ssim,mse\n";
  for (const auto& m : trace)
    out += std::to_string(m.iteration) + "," + io::fmt_double(m.row.psnr) + "," + io::fmt_double(m.row.ssim) + "," +
           io::fmt_double(m.row.mse) + "\n";
  return out;
}

/// Stacked mean for the analytic surrogate: the reference k-space in every channel.
inline Tensor3 surrogate_mean(const ComplexGrid& reference_image, const ChannelLayout& layout) {
  const ComplexGrid k = fft2c(reference_image);
  return stack_channels(std::vector<ComplexGrid>(layout.complex_channels(), k), layout).planes;
}

namespace detail {

// Masked channels through one PC step, then the masked update per channel.
inline void cascade_half_step(std::vector<ComplexGrid>& by_role, const HybridMaskSet& masks,
                              const ChannelLayout& layout, const ScoreModel& model, const NoiseSchedule& ladder,
                              std::size_t level, const ReconConfig& cfg, Rng& rng) {
  std::vector<ComplexGrid> masked;
  for (std::size_t role = 0; role < by_role.size(); ++role)
    masked.push_back(apply_mask(by_role[role], masks.by_role(role)));
  const StackedTensor in = stack_channels(masked, layout);
  StackedTensor out{pc_step(in.planes, level, model, ladder, cfg.snr, cfg.corrector_loops, rng), layout};
  const auto model_roles = unstack_by_role(out);
  for (std::size_t role = 0; role < by_role.size(); ++role)
    by_role[role] = masked_model_update(by_role[role], model_roles[role], masks.by_role(role));
}

inline void check_model(const ScoreModel& model, const ChannelLayout& layout, const char* which) {
  const std::size_t p = model.input_planes();
  if (p != 0 && p != layout.planes())
    throw ValidationError(std::string("model ") + which + " expects " + std::to_string(p) + " planes but its layout has " +
                          std::to_string(layout.planes()));
}

}  // namespace detail

inline ReconResult reconstruct(const Measurement& meas, const ScoreModel& d1, const ScoreModel& d2,
                               const ReconConfig& cfg, const std::optional<ComplexGrid>& reference = std::nullopt) {
  cfg.validate();
  meas.validate();
  detail::check_model(d1, cfg.layout_d1, "D1");
  detail::check_model(d2, cfg.layout_d2, "D2");
  if (reference) require_same_shape(*reference, meas.y, "reconstruct reference");

  const std::size_t h = meas.y.height(), w = meas.y.width();
  const std::size_t n_roles = cfg.layout_d1.complex_channels();
  const NoiseSchedule ladder = cfg.ladder();
  Rng rng(derive_seed(cfg.seed, "sampler"));

  ReconState state;
  state.masks = generate_masks(meas.y, cfg.wavelet, cfg.mask_ranges);

  // Every channel starts as sigma_max-scaled noise.
  std::vector<ComplexGrid> by_role;
  for (std::size_t r = 0; r < n_roles; ++r) {
    ComplexGrid g(h, w);
    for (auto& v : g) {
      const double re = rng.normal();
      const double im = rng.normal();
      v = {cfg.schedule.sigma_max * re, cfg.schedule.sigma_max * im};
    }
    by_role.push_back(std::move(g));
  }

  auto collapse = [&]() {
    const StackedTensor t = stack_channels(by_role, cfg.layout_d1);
    return cfg.recombine == Recombine::Mean ? channel_mean(t) : channel_mean_mask_weighted(t, state.masks);
  };

  ComplexGrid k = meas.y;
  for (std::size_t i = cfg.outer_steps; i >= 1; --i) {
    const std::size_t step = cfg.outer_steps - i + 1;
    detail::cascade_half_step(by_role, state.masks, cfg.layout_d1, d1, ladder, 2 * i, cfg, rng);
    detail::cascade_half_step(by_role, state.masks, cfg.layout_d2, d2, ladder, 2 * i - 1, cfg, rng);
    k = collapse();
    if (cfg.dc_mode == DcMode::PerIteration) k = data_consistency(k, meas, cfg.mu);
    if (!k.all_finite()) throw NumericalError("reconstruction diverged: non-finite k-space at iteration " + std::to_string(step));
    state.masks = refresh_masks(k, cfg.wavelet, cfg.mask_ranges);
    for (auto& c : by_role) c = k;
    state.iteration = step;
    if (reference) {
      ComplexGrid img = ifft2c(cfg.dc_mode == DcMode::PerIteration ? k : data_consistency(k, meas, cfg.mu));
      state.trace.push_back({step, evaluate(img, *reference)});
    }
  }
  if (cfg.dc_mode == DcMode::OnceAtEnd) k = data_consistency(k, meas, cfg.mu);
  state.tensor = stack_channels(by_role, cfg.layout_d1);
  ComplexGrid image = ifft2c(k);
  return {std::move(k), std::move(image), std::move(state)};
}

}  // namespace amdm
