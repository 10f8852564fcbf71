#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "amdm/errors.hpp"
#include "amdm/grid.hpp"

namespace amdm {

inline constexpr double kPsnrCap = 300.0;

struct SsimConfig {
  int window = 11;
  double gaussian_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

struct MetricsRow {
  double psnr = 0.0;  // dB
  double ssim = 0.0;
  double mse = 0.0;   // raw; tables report mse * 1e4

  /// Table cell "PSNR/SSIM/MSE(x1e-4)", e.g. "24.60/0.6107/34.677".
  std::string cell() const {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.2f/%.4f/%.3f", psnr, ssim, mse * 1e4);
    return buf;
  }
};

/// Magnitude image scaled by 1 / max|reference|.
inline RealGrid normalized_magnitude(const ComplexGrid& g, double ref_max) {
  RealGrid out(g.height(), g.width());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = std::abs(g[i]) / ref_max;
  return out;
}

inline double mse(const RealGrid& a, const RealGrid& b) {
  require_same_shape(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

inline double psnr_from_mse(double m) {
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

/// Mean SSIM over all fully contained Gaussian windows (no padding).
inline double ssim(const RealGrid& x, const RealGrid& y, const SsimConfig& cfg = {}) {
  require_same_shape(x, y, "ssim");
  const int H = static_cast<int>(x.height()), W = static_cast<int>(x.width());
  int win = std::min({cfg.window, H, W});
  if (win % 2 == 0) --win;
  const int half = win / 2;
  std::vector<double> g(static_cast<std::size_t>(win));
  double gsum = 0.0;
  for (int i = 0; i < win; ++i) {
    const double d = i - half;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * cfg.gaussian_sigma * cfg.gaussian_sigma));
    gsum += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= gsum;

  const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
  const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);
  double total = 0.0;
  std::size_t count = 0;
  for (int r = half; r < H - half; ++r) {
    for (int c = half; c < W - half; ++c) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = -half; i <= half; ++i) {
        for (int j = -half; j <= half; ++j) {
          const double wgt = g[static_cast<std::size_t>(i + half)] * g[static_cast<std::size_t>(j + half)];
          const double a = x(static_cast<std::size_t>(r + i), static_cast<std::size_t>(c + j));
          const double b = y(static_cast<std::size_t>(r + i), static_cast<std::size_t>(c + j));
          mx += wgt * a;
          my += wgt * b;
          sxx += wgt * a * a;
          syy += wgt * b * b;
          sxy += wgt * a * b;
        }
      }
      const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

/// PSNR / SSIM / MSE on magnitude images normalized to the reference maximum.
inline MetricsRow evaluate(const ComplexGrid& recon, const ComplexGrid& reference, const SsimConfig& cfg = {}) {
  require_same_shape(recon, reference, "evaluate");
  double ref_max = 0.0;
  for (const auto& v : reference) ref_max = std::max(ref_max, std::abs(v));
  require(ref_max > 0.0, "evaluate: reference image is all zero");
  const RealGrid a = normalized_magnitude(recon, ref_max);
  const RealGrid b = normalized_magnitude(reference, ref_max);
  MetricsRow row;
  row.mse = mse(a, b);
  row.psnr = psnr_from_mse(row.mse);
  row.ssim = ssim(a, b, cfg);
  return row;
}

}  // namespace amdm
