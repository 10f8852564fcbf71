#pragma once

#include <string>
#include <utility>
#include <vector>

#include "amdm/adaptive_mask.hpp"
#include "amdm/errors.hpp"
#include "amdm/grid.hpp"

namespace amdm {

// Where k_L sits relative to the high-frequency channels.
enum class LowSlot { Before, Middle, After };

inline std::string to_string(LowSlot s) {
  switch (s) {
    case LowSlot::Before: return "before";
    case LowSlot::Middle: return "middle";
    case LowSlot::After: return "after";
  }
  return "?";
}

inline LowSlot parse_low_slot(const std::string& s) {
  if (s == "before") return LowSlot::Before;
  if (s == "middle") return LowSlot::Middle;
  if (s == "after") return LowSlot::After;
  throw ValidationError("unknown channel layout '" + s + "' (expected before, middle or after)");
}

// Channel ordering of n_high + 1 complex channels. Roles: 0 is k_L, i >= 1 is k_Hi.
struct ChannelLayout {
  LowSlot low_slot = LowSlot::Middle;
  std::size_t n_high = 2;

  std::size_t complex_channels() const { return n_high + 1; }
  std::size_t planes() const { return 2 * (n_high + 1); }

  std::size_t low_position() const {
    switch (low_slot) {
      case LowSlot::Before: return 0;
      case LowSlot::Middle: return (n_high + 1) / 2;
      case LowSlot::After: return n_high;
    }
    return 0;
  }

  std::size_t role_at(std::size_t position) const {
    require(position <= n_high, "channel position out of range");
    const std::size_t lp = low_position();
    if (position == lp) return 0;
    return position < lp ? position + 1 : position;
  }

  std::size_t position_of(std::size_t role) const {
    for (std::size_t p = 0; p <= n_high; ++p)
      if (role_at(p) == role) return p;
    throw ValidationError("channel role out of range");
  }

  friend bool operator==(const ChannelLayout&, const ChannelLayout&) = default;
};

// Default cascade orderings: D1 sees {H1, L, H2}, D2 sees {L, H1, H2}.
inline ChannelLayout layout_d1(std::size_t n_high = 2) { return {LowSlot::Middle, n_high}; }
inline ChannelLayout layout_d2(std::size_t n_high = 2) { return {LowSlot::Before, n_high}; }

struct StackedTensor {
  Tensor3 planes;  // plane 2p = real part of channel p, 2p+1 = imaginary part
  ChannelLayout layout;
};

inline std::pair<RealGrid, RealGrid> split_complex(const ComplexGrid& k) {
  RealGrid re(k.height(), k.width()), im(k.height(), k.width());
  for (std::size_t i = 0; i < k.size(); ++i) {
    re[i] = k[i].real();
    im[i] = k[i].imag();
  }
  return {std::move(re), std::move(im)};
}

inline ComplexGrid merge_complex(const RealGrid& re, const RealGrid& im) {
  require_same_shape(re, im, "merge_complex");
  ComplexGrid out(re.height(), re.width());
  for (std::size_t i = 0; i < re.size(); ++i) out[i] = {re[i], im[i]};
  return out;
}

/// Stacks complex channels given in role order (L, H1, ..., HN) into planes
/// ordered by the layout.
inline StackedTensor stack_channels(const std::vector<ComplexGrid>& by_role, const ChannelLayout& layout) {
  require(by_role.size() == layout.complex_channels(),
          "layout expects " + std::to_string(layout.complex_channels()) + " channels, got " +
              std::to_string(by_role.size()));
  const std::size_t h = by_role.front().height(), w = by_role.front().width();
  StackedTensor t{Tensor3(layout.planes(), h, w), layout};
  for (std::size_t p = 0; p < layout.complex_channels(); ++p) {
    const ComplexGrid& k = by_role[layout.role_at(p)];
    require(k.height() == h && k.width() == w, "stacked channels must share dimensions");
    auto re = t.planes.plane(2 * p);
    auto im = t.planes.plane(2 * p + 1);
    for (std::size_t i = 0; i < k.size(); ++i) {
      re[i] = k[i].real();
      im[i] = k[i].imag();
    }
  }
  return t;
}

inline ComplexGrid channel_at(const Tensor3& planes, std::size_t position) {
  require(2 * position + 1 < planes.channels(), "complex channel index out of range");
  ComplexGrid out(planes.height(), planes.width());
  auto re = planes.plane(2 * position);
  auto im = planes.plane(2 * position + 1);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {re[i], im[i]};
  return out;
}

/// Complex channels in layout (storage) order.
inline std::vector<ComplexGrid> unstack(const StackedTensor& t) {
  require(t.planes.channels() == t.layout.planes(), "tensor plane count does not match its layout");
  std::vector<ComplexGrid> out;
  for (std::size_t p = 0; p < t.layout.complex_channels(); ++p) out.push_back(channel_at(t.planes, p));
  return out;
}

/// Complex channels in role order (L, H1, ..., HN).
inline std::vector<ComplexGrid> unstack_by_role(const StackedTensor& t) {
  auto ordered = unstack(t);
  std::vector<ComplexGrid> out(ordered.size());
  for (std::size_t p = 0; p < ordered.size(); ++p) out[t.layout.role_at(p)] = std::move(ordered[p]);
  return out;
}

inline StackedTensor stack_hybrid(const ComplexGrid& k, const HybridMaskSet& masks, const ChannelLayout& layout) {
  require(layout.n_high == masks.n_high(),
          "layout has " + std::to_string(layout.n_high) + " high channels but the mask set has " +
              std::to_string(masks.n_high()));
  std::vector<ComplexGrid> by_role;
  by_role.push_back(apply_mask(k, masks.low));
  for (const auto& m : masks.highs) by_role.push_back(apply_mask(k, m));
  return stack_channels(by_role, layout);
}

/// Plain arithmetic mean over the complex channels.
inline ComplexGrid channel_mean(const StackedTensor& t) {
  const auto channels = unstack(t);
  ComplexGrid out(t.planes.height(), t.planes.width());
  for (const auto& c : channels)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
  const double inv = 1.0 / static_cast<double>(channels.size());
  for (auto& v : out) v *= inv;
  return out;
}

/// Mean weighted by mask coverage: each pixel averages only the channels whose
/// mask selects it; pixels selected by no mask fall back to the plain mean.
inline ComplexGrid channel_mean_mask_weighted(const StackedTensor& t, const HybridMaskSet& masks) {
  require(t.layout.n_high == masks.n_high(), "mask set does not match tensor layout");
  const auto channels = unstack(t);
  ComplexGrid plain = channel_mean(t);
  ComplexGrid out(t.planes.height(), t.planes.width());
  for (std::size_t i = 0; i < out.size(); ++i) {
    cplx acc{};
    int hits = 0;
    for (std::size_t p = 0; p < channels.size(); ++p) {
      if (masks.by_role(t.layout.role_at(p)).grid[i]) {
        acc += channels[p][i];
        ++hits;
      }
    }
    out[i] = hits > 0 ? acc / static_cast<double>(hits) : plain[i];
  }
  return out;
}

}  // namespace amdm
