#pragma once

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "amdm/denoiser.hpp"
#include "amdm/kspace.hpp"
#include "amdm/metrics.hpp"
#include "amdm/patterns.hpp"
#include "amdm/phantom.hpp"
#include "amdm/recon.hpp"
#include "amdm/training.hpp"

namespace amdm {

// Shared wiring for recon runs on synthetic data. All randomness derives from
// one root seed through named streams: "data" (phantoms, patterns, datasets),
// "noise" (measurement and training noise), "init" (weights), "sampler".
struct Scenario {
  PhantomKind phantom = PhantomKind::SheppLogan;
  std::size_t size = 64;
  PatternKind pattern = PatternKind::Random2D;
  double R = 4.0;
  double center_fraction = 0.04;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
};

struct Acquisition {
  ComplexGrid image;
  Measurement meas;
};

inline Acquisition acquire(const Scenario& s) {
  const std::uint64_t data = derive_seed(s.seed, "data");
  ComplexGrid img = make_phantom(s.phantom, s.size, derive_seed(data, "phantom"));
  const SamplingMask mask =
      generate_pattern({s.pattern, s.R, s.center_fraction, derive_seed(data, "pattern")}, s.size, s.size);
  Measurement meas = apply_sampling(fft2c(img), mask, s.noise_std, derive_seed(s.seed, "noise"));
  return {std::move(img), std::move(meas)};
}

inline ReconConfig with_channels(ReconConfig cfg, std::size_t n_high) {
  cfg.layout_d1.n_high = n_high;
  cfg.layout_d2.n_high = n_high;
  cfg.mask_ranges = MaskRanges::defaults(n_high);
  return cfg;
}

struct TrialResult {
  MetricsRow zero_filled;
  MetricsRow recon;
  ReconResult run;
};

/// Runs one reconstruction. Null models select the analytic surrogate built
/// on the ground-truth k-space with variance `base_var`.
inline TrialResult run_trial(const Scenario& s, ReconConfig cfg, double base_var, const ScoreModel* d1 = nullptr,
                             const ScoreModel* d2 = nullptr) {
  cfg.seed = s.seed;
  const Acquisition acq = acquire(s);
  std::shared_ptr<ScoreModel> a1, a2;
  if (d1 == nullptr) {
    a1 = analytic_gaussian_score(surrogate_mean(acq.image, cfg.layout_d1), base_var);
    d1 = a1.get();
  }
  if (d2 == nullptr) {
    a2 = analytic_gaussian_score(surrogate_mean(acq.image, cfg.layout_d2), base_var);
    d2 = a2.get();
  }
  TrialResult r{evaluate(zero_filled(acq.meas), acq.image), {}, reconstruct(acq.meas, *d1, *d2, cfg, acq.image)};
  r.recon = evaluate(r.run.image, acq.image);
  return r;
}

// ---- pattern / acceleration sweep -------------------------------------------

struct SweepRow {
  PatternKind pattern;
  double R;
  std::uint64_t seed;
  MetricsRow zero_filled;
  MetricsRow recon;
};

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "pattern,R,seed,zero_filled,amdm\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%g", r.R);
    out += to_string(r.pattern) + "," + buf + "," + std::to_string(r.seed) + "," + r.zero_filled.cell() + "," +
           r.recon.cell() + "\n";
  }
  return out;
}

// ---- channel-count ablation -------------------------------------------------

struct AblationRow {
  std::size_t channels;  // real planes, 2 (n_high + 1)
  MetricsRow metrics;
};

struct AblationOptions {
  bool trained = true;  // false: analytic surrogate
  std::size_t train_items = 40;
  std::size_t hidden = 8;
  TrainingConfig training;
  PhantomKind train_phantom = PhantomKind::GaussianBlobs;
  double base_var = 1e-4;
};

inline std::size_t n_high_for_channels(std::size_t channels) {
  require(channels >= 4 && channels % 2 == 0, "channel count must be even and at least 4, got " + std::to_string(channels));
  return channels / 2 - 1;
}

inline std::vector<AblationRow> channel_ablation(const Scenario& s, const ReconConfig& base,
                                                 const std::vector<std::size_t>& channel_counts,
                                                 const AblationOptions& opt) {
  std::vector<AblationRow> rows;
  for (std::size_t channels : channel_counts) {
    const std::size_t n_high = n_high_for_channels(channels);
    const ReconConfig cfg = with_channels(base, n_high);
    if (!opt.trained) {
      rows.push_back({channels, run_trial(s, cfg, opt.base_var).recon});
      continue;
    }
    const std::uint64_t data = derive_seed(s.seed, "data");
    const Dataset ds = make_dataset(opt.train_phantom, opt.train_items, s.size, derive_seed(data, "train"));
    std::vector<std::shared_ptr<TinyDenoiser>> models;
    for (const auto* layout : {&cfg.layout_d1, &cfg.layout_d2}) {
      auto m = std::make_shared<TinyDenoiser>(layout->planes(), opt.hidden, derive_seed(s.seed, "init"));
      train(*m, stacked_training_set(ds, cfg.wavelet, cfg.mask_ranges, *layout), opt.training, cfg.schedule,
            derive_seed(s.seed, "noise"));
      models.push_back(std::move(m));
    }
    rows.push_back({channels, run_trial(s, cfg, opt.base_var, models[0].get(), models[1].get()).recon});
  }
  return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "channels,psnr,ssim,mse_e4,cell\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.2f,%.4f,%.3f,%s\n", r.channels, r.metrics.psnr, r.metrics.ssim,
                  r.metrics.mse * 1e4, r.metrics.cell().c_str());
    out += buf;
  }
  return out;
}

// Channel count with the highest PSNR (first on ties).
inline std::size_t best_channels(const std::vector<AblationRow>& rows) {
  require(!rows.empty(), "empty ablation table");
  const AblationRow* best = &rows.front();
  for (const auto& r : rows)
    if (r.metrics.psnr > best->metrics.psnr) best = &r;
  return best->channels;
}

inline std::string ablation_text(const std::vector<AblationRow>& rows) {
  std::string out = "Channels  PSNR    SSIM    MSE(1e-4)\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-9zu %-7.2f %-7.4f %.3f\n", r.channels, r.metrics.psnr, r.metrics.ssim,
                  r.metrics.mse * 1e4);
    out += buf;
  }
  return out;
}

}  // namespace amdm
