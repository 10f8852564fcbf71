#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "amdm/adaptive_mask.hpp"
#include "amdm/channel_stack.hpp"
#include "amdm/errors.hpp"
#include "amdm/grid.hpp"
#include "amdm/io.hpp"
#include "amdm/kspace.hpp"
#include "amdm/random.hpp"

namespace amdm {

enum class PhantomKind { SheppLogan, GaussianBlobs, SmoothRandom };

inline std::string to_string(PhantomKind k) {
  switch (k) {
    case PhantomKind::SheppLogan: return "shepp-logan";
    case PhantomKind::GaussianBlobs: return "gaussian-blobs";
    case PhantomKind::SmoothRandom: return "smooth-random";
  }
  return "?";
}

inline PhantomKind parse_phantom_kind(const std::string& s) {
  if (s == "shepp-logan" || s == "shepplogan") return PhantomKind::SheppLogan;
  if (s == "gaussian-blobs" || s == "blobs") return PhantomKind::GaussianBlobs;
  if (s == "smooth-random" || s == "smooth") return PhantomKind::SmoothRandom;
  throw ValidationError("unknown phantom kind '" + s + "' (expected shepp-logan, gaussian-blobs or smooth-random)");
}

namespace detail {

inline void normalize_max(ComplexGrid& g) {
  double m = 0.0;
  for (const auto& v : g) m = std::max(m, std::abs(v));
  if (m > 0.0)
    for (auto& v : g) v /= m;
}

// Pixel centre in [-1, 1], y pointing up.
inline double axis_coord(std::size_t i, std::size_t n) {
  return (static_cast<double>(i) + 0.5 - 0.5 * static_cast<double>(n)) / (0.5 * static_cast<double>(n));
}

inline ComplexGrid shepp_logan(std::size_t n) {
  // Modified (Toft) Shepp-Logan: intensity, semi-axes a/b, centre x/y, rotation in degrees.
  struct Ellipse {
    double value, a, b, x0, y0, phi;
  };
  static constexpr Ellipse ellipses[] = {
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},        {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
      {-0.2, 0.11, 0.31, 0.22, 0.0, -18.0},    {-0.2, 0.16, 0.41, -0.22, 0.0, 18.0},
      {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},       {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
      {0.1, 0.046, 0.046, 0.0, -0.1, 0.0},     {0.1, 0.046, 0.023, -0.08, -0.605, 0.0},
      {0.1, 0.023, 0.023, 0.0, -0.606, 0.0},   {0.1, 0.023, 0.046, 0.06, -0.605, 0.0},
  };
  ComplexGrid img(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    const double y = -axis_coord(r, n);
    for (std::size_t c = 0; c < n; ++c) {
      const double x = axis_coord(c, n);
      double v = 0.0;
      for (const auto& e : ellipses) {
        const double phi = e.phi * std::numbers::pi / 180.0;
        const double xr = (x - e.x0) * std::cos(phi) + (y - e.y0) * std::sin(phi);
        const double yr = -(x - e.x0) * std::sin(phi) + (y - e.y0) * std::cos(phi);
        if ((xr * xr) / (e.a * e.a) + (yr * yr) / (e.b * e.b) <= 1.0) v += e.value;
      }
      img(r, c) = v;
    }
  }
  return img;
}

inline ComplexGrid gaussian_blobs(std::size_t n, Rng& rng) {
  const int count = 3 + static_cast<int>(rng.next() % 6);  // 3..8
  ComplexGrid img(n, n);
  const double pa = (rng.uniform() - 0.5) * std::numbers::pi;
  const double pb = (rng.uniform() - 0.5) * std::numbers::pi;
  const double pc = (rng.uniform() - 0.5) * std::numbers::pi;
  struct Blob {
    double amp, x0, y0, width;
  };
  std::vector<Blob> blobs;
  for (int i = 0; i < count; ++i)
    blobs.push_back({0.3 + 0.7 * rng.uniform(), 1.2 * (rng.uniform() - 0.5), 1.2 * (rng.uniform() - 0.5),
                     0.05 + 0.25 * rng.uniform()});
  for (std::size_t r = 0; r < n; ++r) {
    const double y = -axis_coord(r, n);
    for (std::size_t c = 0; c < n; ++c) {
      const double x = axis_coord(c, n);
      double mag = 0.0;
      for (const auto& b : blobs) {
        const double d2 = (x - b.x0) * (x - b.x0) + (y - b.y0) * (y - b.y0);
        mag += b.amp * std::exp(-d2 / (2.0 * b.width * b.width));
      }
      img(r, c) = std::polar(mag, pa * x + pb * y + pc);
    }
  }
  return img;
}

inline ComplexGrid smooth_random(std::size_t n, Rng& rng) {
  ComplexGrid field(n, n);
  for (auto& v : field) {
    const double re = rng.normal();
    const double im = rng.normal();
    v = {re, im};
  }
  ComplexGrid k = fft2c(field);
  const double width = static_cast<double>(n) / 16.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double dy = static_cast<double>(r) - static_cast<double>(n / 2);
    for (std::size_t c = 0; c < n; ++c) {
      const double dx = static_cast<double>(c) - static_cast<double>(n / 2);
      k(r, c) *= std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
    }
  }
  return ifft2c(k);
}

}  // namespace detail

/// Synthetic complex image with max magnitude 1. Shepp-Logan ignores the seed.
inline ComplexGrid make_phantom(PhantomKind kind, std::size_t size, std::uint64_t seed) {
  require(size >= 16, "phantom size must be at least 16");
  Rng rng(seed);
  ComplexGrid img;
  switch (kind) {
    case PhantomKind::SheppLogan: img = detail::shepp_logan(size); break;
    case PhantomKind::GaussianBlobs: img = detail::gaussian_blobs(size, rng); break;
    case PhantomKind::SmoothRandom: img = detail::smooth_random(size, rng); break;
  }
  detail::normalize_max(img);
  return img;
}

// ---- datasets ----------------------------------------------------------------------

struct Dataset {
  std::vector<ComplexGrid> items;
  io::KeyValues manifest;

  void validate() const {
    for (const auto& it : items)
      require(it.same_shape(items.front()), "dataset items must share dimensions");
  }
};

inline Dataset make_dataset(PhantomKind kind, std::size_t count, std::size_t size, std::uint64_t seed) {
  Dataset ds;
  for (std::size_t i = 0; i < count; ++i) ds.items.push_back(make_phantom(kind, size, derive_seed(seed, "item-" + std::to_string(i))));
  ds.manifest = {{"generator", to_string(kind)},
                 {"seed", std::to_string(seed)},
                 {"count", std::to_string(count)},
                 {"height", std::to_string(size)},
                 {"width", std::to_string(size)}};
  return ds;
}

inline ComplexGrid flip_horizontal(const ComplexGrid& g) {
  ComplexGrid out(g.height(), g.width());
  for (std::size_t r = 0; r < g.height(); ++r)
    for (std::size_t c = 0; c < g.width(); ++c) out(r, c) = g(r, g.width() - 1 - c);
  return out;
}

inline ComplexGrid flip_vertical(const ComplexGrid& g) {
  ComplexGrid out(g.height(), g.width());
  for (std::size_t r = 0; r < g.height(); ++r)
    for (std::size_t c = 0; c < g.width(); ++c) out(r, c) = g(g.height() - 1 - r, c);
  return out;
}

// 90 degrees counter-clockwise; square grids only.
inline ComplexGrid rotate90(const ComplexGrid& g) {
  require(g.height() == g.width(), "rotation requires a square grid, got " + g.shape());
  const std::size_t n = g.height();
  ComplexGrid out(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) out(n - 1 - c, r) = g(r, c);
  return out;
}

/// flips: item, horizontal flip, vertical flip. rotations: item and its
/// 90/180/270 rotations. Both: the full 8-element dihedral orbit.
inline Dataset augment(const Dataset& ds, bool flips, bool rotations) {
  ds.validate();
  if (rotations && !ds.items.empty())
    require(ds.items.front().height() == ds.items.front().width(), "rotation augmentation requires square items");
  Dataset out;
  out.manifest = ds.manifest;
  out.manifest.emplace_back("augment_flips", flips ? "1" : "0");
  out.manifest.emplace_back("augment_rotations", rotations ? "1" : "0");
  for (const auto& it : ds.items) {
    if (!rotations) {
      out.items.push_back(it);
      if (flips) {
        out.items.push_back(flip_horizontal(it));
        out.items.push_back(flip_vertical(it));
      }
      continue;
    }
    std::vector<ComplexGrid> rots{it};
    for (int k = 0; k < 3; ++k) rots.push_back(rotate90(rots.back()));
    for (const auto& r : rots) out.items.push_back(r);
    if (flips)
      for (const auto& r : rots) out.items.push_back(flip_horizontal(r));
  }
  return out;
}

inline void save_dataset(const io::fs::path& dir, const Dataset& ds) {
  ds.validate();
  io::fs::create_directories(dir);
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "item_%05zu.ksp", i);
    io::write_ksp1(dir / name, ds.items[i]);
  }
  io::KeyValues kv = ds.manifest;
  kv.emplace_back("items", std::to_string(ds.items.size()));
  io::write_file_atomic(dir / "manifest.txt", io::encode_key_values(kv));
}

inline Dataset load_dataset(const io::fs::path& dir) {
  const auto kv = io::parse_key_values(io::read_file(dir / "manifest.txt"));
  const auto it = kv.find("items");
  if (it == kv.end()) throw IoError((dir / "manifest.txt").string() + ": missing 'items' key");
  Dataset ds;
  for (const auto& [k, v] : kv)
    if (k != "items") ds.manifest.emplace_back(k, v);
  const std::size_t n = std::stoul(it->second);
  for (std::size_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "item_%05zu.ksp", i);
    ds.items.push_back(io::read_ksp1_single(dir / name));
  }
  ds.validate();
  return ds;
}

/// Training tensors: each image's k-space split by its own hybrid masks and
/// stacked in `layout`, the same path the reconstruction uses.
inline std::vector<Tensor3> stacked_training_set(const Dataset& ds, const WaveletSpec& spec, const MaskRanges& ranges,
                                                 const ChannelLayout& layout) {
  std::vector<Tensor3> out;
  for (const auto& img : ds.items) {
    const ComplexGrid k = fft2c(img);
    out.push_back(stack_hybrid(k, generate_masks(k, spec, ranges), layout).planes);
  }
  return out;
}

}  // namespace amdm
