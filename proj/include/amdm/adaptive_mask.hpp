#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "amdm/errors.hpp"
#include "amdm/grid.hpp"
#include "amdm/wavelet.hpp"

namespace amdm {

enum class ThresholdMode { Absolute, Quantile };

// Closed interval [lo, hi] on a residual map. In Quantile mode the bounds are
// fractions of the empirical distribution and are resolved per input.
struct ThresholdRange {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  ThresholdMode mode = ThresholdMode::Absolute;

  static ThresholdRange absolute(double lo, double hi = std::numeric_limits<double>::infinity()) {
    return {lo, hi, ThresholdMode::Absolute};
  }
  static ThresholdRange quantile(double lo, double hi = 1.0) { return {lo, hi, ThresholdMode::Quantile}; }

  void validate() const {
    require(!std::isnan(lo) && !std::isnan(hi), "threshold bounds must not be NaN");
    require(lo >= 0.0, "threshold lower bound must be nonnegative");
    require(lo <= hi, "threshold range requires lo <= hi");
    if (mode == ThresholdMode::Quantile) require(hi <= 1.0, "quantile bounds must lie in [0,1]");
  }

  friend bool operator==(const ThresholdRange&, const ThresholdRange&) = default;
};

enum class MaskKind { LowSelect, HighSelect };

struct AdaptiveMask {
  MaskKind kind = MaskKind::HighSelect;
  BinaryGrid grid;
  ThresholdRange source;

  std::size_t height() const { return grid.height(); }
  std::size_t width() const { return grid.width(); }
  std::size_t count() const { return popcount(grid); }
};

// M_L plus the ordered high-frequency masks M_H1..M_HN.
struct HybridMaskSet {
  AdaptiveMask low;
  std::vector<AdaptiveMask> highs;
  std::vector<std::string> warnings;  // e.g. masks that came out all-zero

  std::size_t n_high() const { return highs.size(); }

  // Masks in role order: index 0 is M_L, index i (>= 1) is M_Hi.
  const AdaptiveMask& by_role(std::size_t role) const { return role == 0 ? low : highs.at(role - 1); }
};

// Threshold configuration for one HybridMaskSet.
struct MaskRanges {
  ThresholdRange low = ThresholdRange::quantile(0.70, 1.0);
  std::vector<ThresholdRange> highs{ThresholdRange::quantile(0.50, 1.0), ThresholdRange::quantile(0.75, 1.0)};

  // Default quantile ranges for n high masks, strengthening from [0.5,1] to [0.75,1].
  static MaskRanges defaults(std::size_t n_high) {
    require(n_high >= 1, "at least one high-frequency mask is required");
    MaskRanges r;
    r.highs.clear();
    for (std::size_t i = 0; i < n_high; ++i) {
      const double lo = n_high == 1 ? 0.5 : 0.5 + 0.25 * static_cast<double>(i) / static_cast<double>(n_high - 1);
      r.highs.push_back(ThresholdRange::quantile(lo, 1.0));
    }
    return r;
  }
};

struct FrequencyResiduals {
  RealGrid low_res;   // |k - H(k)|
  RealGrid high_res;  // |k - L(k)|
};

inline FrequencyResiduals frequency_residuals(const ComplexGrid& k, const WaveletSpec& spec) {
  const ComplexGrid hk = highpass_H(k, spec);
  const ComplexGrid lk = lowpass_L(k, spec);
  FrequencyResiduals out{RealGrid(k.height(), k.width()), RealGrid(k.height(), k.width())};
  for (std::size_t i = 0; i < k.size(); ++i) {
    out.low_res[i] = std::abs(k[i] - hk[i]);
    out.high_res[i] = std::abs(k[i] - lk[i]);
  }
  return out;
}

struct ResolvedThresholds {
  double lo;
  double hi;
};

/// Maps a range onto absolute bounds for a given residual map. Quantile q
/// resolves the lower bound to the sorted value at floor(q n) and the upper
/// bound to the sorted value at ceil(q n) - 1 (clamped), so [0.5, 1] picks
/// the top ceil(n/2) values of a map with distinct entries.
inline ResolvedThresholds resolve_thresholds(const RealGrid& residual, const ThresholdRange& range) {
  range.validate();
  if (range.mode == ThresholdMode::Absolute) return {range.lo, range.hi};
  std::vector<double> sorted(residual.begin(), residual.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  const auto last = sorted.size() - 1;
  const auto lo_idx = std::min<std::size_t>(static_cast<std::size_t>(std::floor(range.lo * n)), last);
  const double hi_pos = std::ceil(range.hi * n) - 1.0;
  const auto hi_idx = hi_pos <= 0.0 ? std::size_t{0} : std::min<std::size_t>(static_cast<std::size_t>(hi_pos), last);
  return {sorted[lo_idx], sorted[hi_idx]};
}

// Relative tolerance for quantile bounds. Wavelet residuals contain values
// that are equal in exact arithmetic but differ by a few ulps; without it a
// quantile cut could split such a tie on rounding noise.
inline constexpr double kQuantileTieTolerance = 1e-9;

inline BinaryGrid threshold_mask(const RealGrid& residual, const ThresholdRange& range) {
  const auto t = resolve_thresholds(residual, range);
  double tol = 0.0;
  if (range.mode == ThresholdMode::Quantile)
    for (double v : residual) tol = std::max(tol, kQuantileTieTolerance * v);
  BinaryGrid out(residual.height(), residual.width());
  for (std::size_t i = 0; i < residual.size(); ++i)
    out[i] = (residual[i] >= t.lo - tol && residual[i] <= t.hi + tol) ? 1 : 0;
  return out;
}

inline HybridMaskSet generate_masks(const ComplexGrid& k, const WaveletSpec& spec, const ThresholdRange& low_range,
                                    const std::vector<ThresholdRange>& high_ranges) {
  require(!high_ranges.empty(), "generate_masks needs at least one high-frequency range");
  low_range.validate();
  for (const auto& r : high_ranges) r.validate();

  const FrequencyResiduals res = frequency_residuals(k, spec);
  HybridMaskSet set;
  set.low = {MaskKind::LowSelect, threshold_mask(res.low_res, low_range), low_range};
  if (set.low.count() == 0) set.warnings.push_back("low-frequency mask M_L is empty");
  for (std::size_t i = 0; i < high_ranges.size(); ++i) {
    set.highs.push_back({MaskKind::HighSelect, threshold_mask(res.high_res, high_ranges[i]), high_ranges[i]});
    if (set.highs.back().count() == 0)
      set.warnings.push_back("high-frequency mask M_H" + std::to_string(i + 1) + " is empty");
  }
  return set;
}

inline HybridMaskSet generate_masks(const ComplexGrid& k, const WaveletSpec& spec, const MaskRanges& ranges) {
  return generate_masks(k, spec, ranges.low, ranges.highs);
}

inline ComplexGrid apply_mask(const ComplexGrid& k, const BinaryGrid& m) {
  require_same_shape(k, m, "apply_mask");
  ComplexGrid out(k.height(), k.width());
  for (std::size_t i = 0; i < k.size(); ++i) out[i] = m[i] ? k[i] : cplx{};
  return out;
}

inline ComplexGrid apply_mask(const ComplexGrid& k, const AdaptiveMask& m) { return apply_mask(k, m.grid); }

/// Re-derives the masks from the latest k-space estimate. Same contract as
/// generate_masks; quantile thresholds re-resolve against the new residuals.
inline HybridMaskSet refresh_masks(const ComplexGrid& current_k, const WaveletSpec& spec, const MaskRanges& ranges) {
  return generate_masks(current_k, spec, ranges);
}

}  // namespace amdm
