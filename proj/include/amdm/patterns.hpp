#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "amdm/errors.hpp"
#include "amdm/grid.hpp"
#include "amdm/kspace.hpp"
#include "amdm/random.hpp"

namespace amdm {

enum class PatternKind { Random2D, Poisson, Radial };

inline std::string to_string(PatternKind k) {
  switch (k) {
    case PatternKind::Random2D: return "random2d";
    case PatternKind::Poisson: return "poisson";
    case PatternKind::Radial: return "radial";
  }
  return "?";
}

inline PatternKind parse_pattern_kind(const std::string& s) {
  if (s == "random2d" || s == "random") return PatternKind::Random2D;
  if (s == "poisson") return PatternKind::Poisson;
  if (s == "radial") return PatternKind::Radial;
  throw ValidationError("unknown sampling pattern '" + s + "' (expected random2d, poisson or radial)");
}

struct PatternSpec {
  PatternKind kind = PatternKind::Random2D;
  double target_R = 4.0;
  double center_fraction = 0.04;  // side of the fully sampled centre square, as a fraction of each axis
  std::uint64_t seed = 0;

  void validate() const {
    require(std::isfinite(target_R) && target_R > 1.0, "acceleration factor R must exceed 1");
    require(center_fraction >= 0.0 && center_fraction < 1.0, "center_fraction must lie in [0,1)");
  }

  // Relative AF tolerance for this kind.
  double tolerance() const { return kind == PatternKind::Radial ? 0.10 : 0.05; }
};

struct PatternResult {
  SamplingMask mask;
  double parameter = 0.0;      // density p, radius scale, or spoke count
  std::vector<double> angles;  // radial spoke angles (radians)
};

namespace detail {

struct CenterBox {
  std::size_t r0 = 0, r1 = 0, c0 = 0, c1 = 0;  // half-open
  bool contains(std::size_t r, std::size_t c) const { return r >= r0 && r < r1 && c >= c0 && c < c1; }
  std::size_t area() const { return (r1 - r0) * (c1 - c0); }
};

inline CenterBox center_box(std::size_t h, std::size_t w, double fraction) {
  const auto sh = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(h)));
  const auto sw = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(w)));
  CenterBox b;
  b.r0 = h / 2 - std::min(h / 2, sh / 2);
  b.c0 = w / 2 - std::min(w / 2, sw / 2);
  b.r1 = std::min(h, b.r0 + sh);
  b.c1 = std::min(w, b.c0 + sw);
  return b;
}

inline BinaryGrid center_seed(std::size_t h, std::size_t w, const CenterBox& box) {
  BinaryGrid m(h, w);
  for (std::size_t r = box.r0; r < box.r1; ++r)
    for (std::size_t c = box.c0; c < box.c1; ++c) m(r, c) = 1;
  return m;
}

inline std::size_t budget(std::size_t h, std::size_t w, double R) {
  return static_cast<std::size_t>(std::lround(static_cast<double>(h * w) / R));
}

inline double achieved_af(const BinaryGrid& m) {
  return static_cast<double>(m.size()) / static_cast<double>(std::max<std::size_t>(popcount(m), 1));
}

inline void check_center_budget(const PatternSpec& spec, std::size_t center, std::size_t target) {
  if (center > target)
    throw ValidationError("unreachable acceleration: the fully sampled centre alone holds " + std::to_string(center) +
                          " samples but R=" + std::to_string(spec.target_R) + " allows only " +
                          std::to_string(target) + "; lower center_fraction or R");
}

inline PatternResult finish(const PatternSpec& spec, BinaryGrid m, double parameter, std::vector<double> angles = {}) {
  const double af = achieved_af(m);
  if (popcount(m) == 0 || std::abs(af - spec.target_R) > spec.tolerance() * spec.target_R)
    throw NumericalError("could not calibrate " + to_string(spec.kind) + " pattern to R=" +
                         std::to_string(spec.target_R) + " (achieved " + std::to_string(af) + ")");
  return {SamplingMask(std::move(m)), parameter, std::move(angles)};
}

inline PatternResult random2d(const PatternSpec& spec, std::size_t h, std::size_t w) {
  const auto box = center_box(h, w, spec.center_fraction);
  const std::size_t target = budget(h, w, spec.target_R);
  check_center_budget(spec, box.area(), target);
  Rng rng(spec.seed);
  RealGrid u(h, w);
  for (auto& v : u) v = rng.uniform();
  auto build = [&](double p) {
    BinaryGrid m = center_seed(h, w, box);
    for (std::size_t i = 0; i < m.size(); ++i)
      if (u[i] < p) m[i] = 1;
    return m;
  };
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 64; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (popcount(build(mid)) < target) lo = mid;
    else hi = mid;
  }
  return finish(spec, build(hi), hi);
}

}  // namespace detail

/// Poisson-disc exclusion radius at pixel (r, c): shrinks linearly toward the
/// centre, from `scale` at the corners to scale/4 at the middle.
inline double poisson_radius(double scale, std::size_t r, std::size_t c, std::size_t h, std::size_t w) {
  const double dy = (static_cast<double>(r) - static_cast<double>(h / 2)) / (0.5 * static_cast<double>(h));
  const double dx = (static_cast<double>(c) - static_cast<double>(w / 2)) / (0.5 * static_cast<double>(w));
  const double rho = std::min(1.0, std::sqrt(dx * dx + dy * dy) / std::numbers::sqrt2);
  return scale * (0.25 + 0.75 * rho);
}

namespace detail {

inline BinaryGrid poisson_darts(std::size_t h, std::size_t w, const CenterBox& box, double scale,
                                const std::vector<std::size_t>& order) {
  BinaryGrid m = center_seed(h, w, box);
  RealGrid radius(h, w, 0.0);  // radius of accepted dart, 0 = none
  for (std::size_t idx : order) {
    const std::size_t r = idx / w, c = idx % w;
    const double rp = poisson_radius(scale, r, c, h, w);
    const auto win = static_cast<std::ptrdiff_t>(std::ceil(rp));
    bool ok = true;
    for (std::ptrdiff_t dr = -win; dr <= win && ok; ++dr) {
      const std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(r) + dr;
      if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(h)) continue;
      for (std::ptrdiff_t dc = -win; dc <= win; ++dc) {
        const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(c) + dc;
        if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(w)) continue;
        const double rq = radius(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
        if (rq == 0.0) continue;
        const double d = std::hypot(static_cast<double>(dr), static_cast<double>(dc));
        if (d < std::min(rp, rq)) {
          ok = false;
          break;
        }
      }
    }
    if (ok) {
      m(r, c) = 1;
      radius(r, c) = rp;
    }
  }
  return m;
}

inline PatternResult poisson(const PatternSpec& spec, std::size_t h, std::size_t w) {
  const auto box = center_box(h, w, spec.center_fraction);
  const std::size_t target = budget(h, w, spec.target_R);
  check_center_budget(spec, box.area(), target);
  Rng rng(spec.seed);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < h * w; ++i)
    if (!box.contains(i / w, i % w)) order.push_back(i);
  std::shuffle(order.begin(), order.end(), rng.engine());

  auto count = [&](double s) { return popcount(poisson_darts(h, w, box, s, order)); };
  double lo = 0.5, hi = 1.0;
  while (count(hi) > target && hi < static_cast<double>(std::max(h, w))) {
    lo = hi;
    hi *= 2.0;
  }
  double best = hi;
  double best_err = std::abs(static_cast<double>(count(hi)) - static_cast<double>(target));
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    const std::size_t n = count(mid);
    const double err = std::abs(static_cast<double>(n) - static_cast<double>(target));
    if (err < best_err) {
      best = mid;
      best_err = err;
    }
    if (n > target) lo = mid;
    else hi = mid;
  }
  return finish(spec, poisson_darts(h, w, box, best, order), best);
}

// Pixels covered by a centre-crossing line at angle theta.
inline void rasterize_spoke(BinaryGrid& m, double theta) {
  const std::size_t h = m.height(), w = m.width();
  const double cy = static_cast<double>(h / 2), cx = static_cast<double>(w / 2);
  const double len = static_cast<double>(std::max(h, w));
  const double dy = std::sin(theta), dx = std::cos(theta);
  for (double t = -len; t <= len; t += 0.25) {
    const long r = std::lround(cy + t * dy);
    const long c = std::lround(cx + t * dx);
    if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(w)) continue;
    m(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = 1;
  }
}

inline std::vector<double> spoke_angles(std::size_t n) {
  std::vector<double> a(n);
  for (std::size_t k = 0; k < n; ++k) a[k] = std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
  return a;
}

inline PatternResult radial(const PatternSpec& spec, std::size_t h, std::size_t w) {
  const auto box = center_box(h, w, spec.center_fraction);
  const std::size_t target = budget(h, w, spec.target_R);
  check_center_budget(spec, box.area(), target);
  auto build = [&](std::size_t n) {
    BinaryGrid m = center_seed(h, w, box);
    for (double a : spoke_angles(n)) rasterize_spoke(m, a);
    return m;
  };
  std::size_t best = 1;
  double best_err = std::abs(achieved_af(build(1)) - spec.target_R);
  const std::size_t max_spokes = 4 * std::max(h, w);
  for (std::size_t n = 2; n <= max_spokes; ++n) {
    const BinaryGrid m = build(n);
    const double err = std::abs(achieved_af(m) - spec.target_R);
    if (err < best_err) {
      best = n;
      best_err = err;
    }
    if (popcount(m) > 2 * target) break;
  }
  return finish(spec, build(best), static_cast<double>(best), spoke_angles(best));
}

}  // namespace detail

inline PatternResult generate_pattern_detailed(const PatternSpec& spec, std::size_t height, std::size_t width) {
  spec.validate();
  require(height >= 2 && width >= 2, "pattern grid must be at least 2x2");
  switch (spec.kind) {
    case PatternKind::Random2D: return detail::random2d(spec, height, width);
    case PatternKind::Poisson: return detail::poisson(spec, height, width);
    case PatternKind::Radial: return detail::radial(spec, height, width);
  }
  throw ValidationError("unknown pattern kind");
}

inline SamplingMask generate_pattern(const PatternSpec& spec, std::size_t height, std::size_t width) {
  return generate_pattern_detailed(spec, height, width).mask;
}

}  // namespace amdm
