#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "amdm/errors.hpp"
#include "amdm/grid.hpp"

namespace amdm {

enum class WaveletFamily { Haar, Daubechies4 };

struct WaveletSpec {
  WaveletFamily family = WaveletFamily::Haar;
  int levels = 2;
};

inline std::string to_string(WaveletFamily f) {
  return f == WaveletFamily::Haar ? "haar" : "db4";
}

inline WaveletFamily parse_wavelet_family(const std::string& s) {
  if (s == "haar") return WaveletFamily::Haar;
  if (s == "db4" || s == "daubechies4") return WaveletFamily::Daubechies4;
  throw ValidationError("unknown wavelet family '" + s + "' (expected haar or db4)");
}

// Detail subbands of one decomposition level. LH: low along rows (horizontal),
// high along columns (vertical); HL the converse; HH high in both.
struct DetailLevel {
  ComplexGrid lh;
  ComplexGrid hl;
  ComplexGrid hh;
};

struct SubbandSet {
  ComplexGrid approximation;
  std::vector<DetailLevel> details;  // details[0] is the finest level

  std::size_t coefficient_count() const {
    std::size_t n = approximation.size();
    for (const auto& d : details) n += d.lh.size() + d.hl.size() + d.hh.size();
    return n;
  }
};

namespace detail {

struct FilterPair {
  std::vector<double> low;
  std::vector<double> high;
};

inline FilterPair wavelet_filters(WaveletFamily family) {
  if (family == WaveletFamily::Haar) {
    const double s = 1.0 / std::sqrt(2.0);
    return {{s, s}, {s, -s}};
  }
  const double r3 = std::sqrt(3.0);
  const double n = 4.0 * std::sqrt(2.0);
  std::vector<double> h{(1 + r3) / n, (3 + r3) / n, (3 - r3) / n, (1 - r3) / n};
  std::vector<double> g(h.size());
  for (std::size_t k = 0; k < h.size(); ++k)
    g[k] = ((k % 2 == 0) ? 1.0 : -1.0) * h[h.size() - 1 - k];
  return {h, g};
}

// One periodic analysis step on n strided samples; low half then high half.
inline void analyze_line(std::span<cplx> buf, std::size_t n, std::size_t stride,
                         const FilterPair& f, std::vector<cplx>& tmp) {
  tmp.assign(n, cplx{});
  const std::size_t half = n / 2;
  for (std::size_t i = 0; i < half; ++i) {
    cplx a{}, d{};
    for (std::size_t k = 0; k < f.low.size(); ++k) {
      const cplx x = buf[((2 * i + k) % n) * stride];
      a += f.low[k] * x;
      d += f.high[k] * x;
    }
    tmp[i] = a;
    tmp[half + i] = d;
  }
  for (std::size_t i = 0; i < n; ++i) buf[i * stride] = tmp[i];
}

inline void synthesize_line(std::span<cplx> buf, std::size_t n, std::size_t stride,
                            const FilterPair& f, std::vector<cplx>& tmp) {
  tmp.assign(n, cplx{});
  const std::size_t half = n / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const cplx a = buf[i * stride];
    const cplx d = buf[(half + i) * stride];
    for (std::size_t k = 0; k < f.low.size(); ++k) tmp[(2 * i + k) % n] += f.low[k] * a + f.high[k] * d;
  }
  for (std::size_t i = 0; i < n; ++i) buf[i * stride] = tmp[i];
}

inline ComplexGrid copy_block(const ComplexGrid& src, std::size_t r0, std::size_t c0, std::size_t h,
                              std::size_t w) {
  ComplexGrid out(h, w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) out(r, c) = src(r0 + r, c0 + c);
  return out;
}

inline void paste_block(ComplexGrid& dst, const ComplexGrid& src, std::size_t r0, std::size_t c0) {
  for (std::size_t r = 0; r < src.height(); ++r)
    for (std::size_t c = 0; c < src.width(); ++c) dst(r0 + r, c0 + c) = src(r, c);
}

inline void check_wavelet_shape(std::size_t h, std::size_t w, const WaveletSpec& spec) {
  require(spec.levels >= 1, "wavelet levels must be at least 1");
  require(spec.levels < 31, "wavelet levels out of range");
  const std::size_t block = std::size_t{1} << spec.levels;
  require(h % block == 0 && w % block == 0,
          "grid " + shape_str(h, w) + " is not divisible by 2^" + std::to_string(spec.levels) +
              "; pad the grid or lower the wavelet levels");
}

}  // namespace detail

/// Separable orthogonal 2D DWT with periodic boundary extension.
/// Real and imaginary parts are transformed independently (real filters).
inline SubbandSet dwt2(const ComplexGrid& x, const WaveletSpec& spec) {
  detail::check_wavelet_shape(x.height(), x.width(), spec);
  const auto filters = detail::wavelet_filters(spec.family);
  ComplexGrid work = x;
  std::span<cplx> buf = work.values();
  const std::size_t W = x.width();
  std::vector<cplx> tmp;
  SubbandSet out;
  for (int lvl = 0; lvl < spec.levels; ++lvl) {
    const std::size_t rh = x.height() >> lvl, rw = x.width() >> lvl;
    for (std::size_t r = 0; r < rh; ++r) detail::analyze_line(buf.subspan(r * W), rw, 1, filters, tmp);
    for (std::size_t c = 0; c < rw; ++c) detail::analyze_line(buf.subspan(c), rh, W, filters, tmp);
    const std::size_t hh = rh / 2, hw = rw / 2;
    out.details.push_back({detail::copy_block(work, hh, 0, hh, hw), detail::copy_block(work, 0, hw, hh, hw),
                           detail::copy_block(work, hh, hw, hh, hw)});
  }
  out.approximation =
      detail::copy_block(work, 0, 0, x.height() >> spec.levels, x.width() >> spec.levels);
  return out;
}

inline ComplexGrid idwt2(const SubbandSet& s, const WaveletSpec& spec) {
  require(static_cast<int>(s.details.size()) == spec.levels,
          "subband set depth does not match wavelet levels");
  const std::size_t h = s.approximation.height() << spec.levels;
  const std::size_t w = s.approximation.width() << spec.levels;
  detail::check_wavelet_shape(h, w, spec);
  const auto filters = detail::wavelet_filters(spec.family);
  ComplexGrid work(h, w);
  detail::paste_block(work, s.approximation, 0, 0);
  std::span<cplx> buf = work.values();
  std::vector<cplx> tmp;
  for (int lvl = spec.levels - 1; lvl >= 0; --lvl) {
    const std::size_t rh = h >> lvl, rw = w >> lvl;
    const std::size_t hh = rh / 2, hw = rw / 2;
    const auto& d = s.details[static_cast<std::size_t>(lvl)];
    require(d.lh.height() == hh && d.lh.width() == hw && d.hl.same_shape(d.lh) && d.hh.same_shape(d.lh),
            "detail subband shape mismatch at level " + std::to_string(lvl + 1));
    detail::paste_block(work, d.lh, hh, 0);
    detail::paste_block(work, d.hl, 0, hw);
    detail::paste_block(work, d.hh, hh, hw);
    for (std::size_t c = 0; c < rw; ++c) detail::synthesize_line(buf.subspan(c), rh, w, filters, tmp);
    for (std::size_t r = 0; r < rh; ++r) detail::synthesize_line(buf.subspan(r * w), rw, 1, filters, tmp);
  }
  return work;
}

/// H(x): reconstruct from the detail subbands only.
inline ComplexGrid highpass_H(const ComplexGrid& x, const WaveletSpec& spec) {
  SubbandSet s = dwt2(x, spec);
  for (auto& v : s.approximation) v = cplx{};
  return idwt2(s, spec);
}

/// L(x): reconstruct from the coarsest approximation only.
inline ComplexGrid lowpass_L(const ComplexGrid& x, const WaveletSpec& spec) {
  SubbandSet s = dwt2(x, spec);
  for (auto& d : s.details) {
    for (auto& v : d.lh) v = cplx{};
    for (auto& v : d.hl) v = cplx{};
    for (auto& v : d.hh) v = cplx{};
  }
  return idwt2(s, spec);
}

}  // namespace amdm
