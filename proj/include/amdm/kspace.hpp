#pragma once

#include <fftw3.h>

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include "amdm/errors.hpp"
#include "amdm/grid.hpp"
#include "amdm/random.hpp"

namespace amdm {

namespace detail {

// FFTW plans are created under a lock (the planner is not thread-safe) and
// cached per (height, width, direction). Execution through fftw_execute_dft
// on caller-owned buffers is thread-safe.
class FftPlanCache {
 public:
  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  fftw_plan plan(int height, int width, int sign) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto key = std::make_tuple(height, width, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second.get();
    std::vector<cplx> scratch(static_cast<std::size_t>(height) * width);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan p =
        fftw_plan_dft_2d(height, width, buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (p == nullptr) throw NumericalError("FFTW failed to create a plan");
    plans_.emplace(key, PlanPtr(p));
    return p;
  }

 private:
  struct PlanDeleter {
    void operator()(fftw_plan p) const { fftw_destroy_plan(p); }
  };
  using PlanPtr = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDeleter>;

  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, PlanPtr> plans_;
};

// out(r + dr, c + dc) = in(r, c), indices modulo the grid size.
inline ComplexGrid circshift(const ComplexGrid& in, std::size_t dr, std::size_t dc) {
  const std::size_t h = in.height(), w = in.width();
  ComplexGrid out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t rr = (r + dr) % h;
    for (std::size_t c = 0; c < w; ++c) out(rr, (c + dc) % w) = in(r, c);
  }
  return out;
}

inline ComplexGrid centered_dft(const ComplexGrid& in, int sign) {
  require(in.height() >= 2 && in.width() >= 2, "centered FFT needs at least 2x2, got " + in.shape());
  require(in.all_finite(), "centered FFT input contains non-finite values");
  const std::size_t h = in.height(), w = in.width();
  // ifftshift moves the centre (h/2, w/2) to the origin.
  ComplexGrid work = circshift(in, h - h / 2, w - w / 2);
  fftw_plan p = FftPlanCache::instance().plan(static_cast<int>(h), static_cast<int>(w), sign);
  auto* buf = reinterpret_cast<fftw_complex*>(work.values().data());
  fftw_execute_dft(p, buf, buf);
  const double scale = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (auto& v : work) v *= scale;
  return circshift(work, h / 2, w / 2);
}

}  // namespace detail

/// Orthonormal centered 2D DFT. DC lands at (H/2, W/2) (integer division).
inline ComplexGrid fft2c(const ComplexGrid& img) { return detail::centered_dft(img, FFTW_FORWARD); }

/// Inverse of fft2c.
inline ComplexGrid ifft2c(const ComplexGrid& k) { return detail::centered_dft(k, FFTW_BACKWARD); }

// Binary undersampling pattern m with at least one sampled location.
class SamplingMask {
 public:
  SamplingMask() = default;

  explicit SamplingMask(BinaryGrid grid) : grid_(std::move(grid)) {
    require(!grid_.empty(), "sampling mask is empty");
    for (auto v : grid_) require(v == 0 || v == 1, "sampling mask entries must be 0 or 1");
    require(popcount(grid_) > 0, "sampling mask must sample at least one location");
  }

  static SamplingMask full(std::size_t h, std::size_t w) { return SamplingMask(BinaryGrid(h, w, 1)); }

  const BinaryGrid& grid() const { return grid_; }
  std::size_t height() const { return grid_.height(); }
  std::size_t width() const { return grid_.width(); }
  bool sampled(std::size_t r, std::size_t c) const { return grid_(r, c) != 0; }
  std::size_t count() const { return popcount(grid_); }

  double acceleration() const {
    return static_cast<double>(grid_.size()) / static_cast<double>(count());
  }

  friend bool operator==(const SamplingMask& a, const SamplingMask& b) { return a.grid_ == b.grid_; }

 private:
  BinaryGrid grid_;
};

struct Measurement {
  ComplexGrid y;
  SamplingMask mask;
  double noise_std = 0.0;

  void validate() const {
    require_same_shape(y, mask.grid(), "measurement");
    require(noise_std >= 0.0, "measurement noise_std must be nonnegative");
    for (std::size_t i = 0; i < y.size(); ++i)
      require(mask.grid()[i] != 0 || y[i] == cplx{},
              "measurement has nonzero data at an unsampled location");
  }
};

/// y = m .* (k + eta), eta circular complex Gaussian with E|eta|^2 = noise_std^2.
inline Measurement apply_sampling(const ComplexGrid& k, const SamplingMask& mask, double noise_std,
                                  std::uint64_t seed) {
  require_same_shape(k, mask.grid(), "apply_sampling");
  require(noise_std >= 0.0, "noise_std must be nonnegative");
  require(k.all_finite(), "apply_sampling: k-space contains non-finite values");
  Rng rng(seed);
  const double s = noise_std / std::sqrt(2.0);
  ComplexGrid y(k.height(), k.width());
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (mask.grid()[i] == 0) continue;
    cplx eta{};
    if (noise_std > 0.0) {
      const double re = rng.normal();
      const double im = rng.normal();
      eta = {s * re, s * im};
    }
    y[i] = k[i] + eta;
  }
  return {std::move(y), mask, noise_std};
}

inline ComplexGrid zero_filled(const Measurement& meas) {
  meas.validate();
  return ifft2c(meas.y);
}

}  // namespace amdm
