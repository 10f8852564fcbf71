#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "amdm/errors.hpp"

namespace amdm {

using cplx = std::complex<double>;

namespace detail {

template <class T>
bool is_finite_value(const T& v) {
  if constexpr (std::is_same_v<T, cplx>) {
    return std::isfinite(v.real()) && std::isfinite(v.imag());
  } else if constexpr (std::is_floating_point_v<T>) {
    return std::isfinite(v);
  } else {
    return true;
  }
}

inline std::string shape_str(std::size_t h, std::size_t w) {
  return std::to_string(h) + "x" + std::to_string(w);
}

}  // namespace detail

// Row-major H x W array. Used as image, k-space, residual map and mask.
template <class T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;

  Grid(std::size_t height, std::size_t width, T fill = T{})
      : height_(height), width_(width), data_(height * width, fill) {
    require(height > 0 && width > 0, "grid dimensions must be positive");
  }

  Grid(std::size_t height, std::size_t width, std::vector<T> data)
      : height_(height), width_(width), data_(std::move(data)) {
    require(height > 0 && width > 0, "grid dimensions must be positive");
    require(data_.size() == height * width,
            "grid data length " + std::to_string(data_.size()) + " does not match " +
                detail::shape_str(height, width));
    require(all_finite(), "grid contains non-finite values");
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * width_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * width_ + c]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  const std::vector<T>& vec() const { return data_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  bool same_shape(const Grid& o) const { return height_ == o.height_ && width_ == o.width_; }

  template <class U>
  bool same_shape(const Grid<U>& o) const {
    return height_ == o.height() && width_ == o.width();
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](const T& v) { return detail::is_finite_value(v); });
  }

  std::string shape() const { return detail::shape_str(height_, width_); }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
  }

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<T> data_;
};

using ComplexGrid = Grid<cplx>;
using RealGrid = Grid<double>;
using BinaryGrid = Grid<std::uint8_t>;

template <class T, class U>
void require_same_shape(const Grid<T>& a, const Grid<U>& b, const std::string& what) {
  require(a.same_shape(b), what + ": shape mismatch (" + a.shape() + " vs " + b.shape() + ")");
}

inline ComplexGrid operator+(const ComplexGrid& a, const ComplexGrid& b) {
  require_same_shape(a, b, "grid addition");
  ComplexGrid out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

inline ComplexGrid operator-(const ComplexGrid& a, const ComplexGrid& b) {
  require_same_shape(a, b, "grid subtraction");
  ComplexGrid out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

inline ComplexGrid operator*(cplx s, const ComplexGrid& a) {
  ComplexGrid out = a;
  for (auto& v : out) v *= s;
  return out;
}

inline RealGrid magnitude(const ComplexGrid& g) {
  RealGrid out(g.height(), g.width());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = std::abs(g[i]);
  return out;
}

inline double l2_norm(const ComplexGrid& g) {
  double s = 0.0;
  for (const auto& v : g) s += std::norm(v);
  return std::sqrt(s);
}

inline std::size_t popcount(const BinaryGrid& m) {
  std::size_t n = 0;
  for (auto v : m) n += v != 0;
  return n;
}

// C x H x W real tensor, channel-major. The unit the score models consume.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0)
      : channels_(channels), height_(height), width_(width),
        data_(channels * height * width, fill) {
    require(channels > 0 && height > 0 && width > 0, "tensor dimensions must be positive");
  }

  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t plane_size() const { return height_ * width_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t c, std::size_t r, std::size_t x) {
    return data_[(c * height_ + r) * width_ + x];
  }
  double operator()(std::size_t c, std::size_t r, std::size_t x) const {
    return data_[(c * height_ + r) * width_ + x];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> plane(std::size_t c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(std::size_t c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }

  bool same_shape(const Tensor3& o) const {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  std::string shape() const {
    return std::to_string(channels_) + "x" + std::to_string(height_) + "x" + std::to_string(width_);
  }

  friend bool operator==(const Tensor3& a, const Tensor3& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace amdm
