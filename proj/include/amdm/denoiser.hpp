#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "amdm/errors.hpp"
#include "amdm/grid.hpp"
#include "amdm/io.hpp"
#include "amdm/random.hpp"
#include "amdm/sde.hpp"

namespace amdm {

// A score model with a flat parameter vector and a vector-Jacobian product.
class TrainableScoreModel : public ScoreModel {
 public:
  // Maps the model output to dLoss/dOutput.
  using OutputGradient = std::function<Tensor3(const Tensor3& output)>;

  bool trainable() const override { return true; }
  virtual std::span<double> parameters() = 0;
  virtual std::span<const double> parameters() const = 0;

  /// Evaluates the model, then accumulates d(loss)/d(parameters) into `grad`
  /// where the loss gradient with respect to the output comes from `upstream`.
  virtual Tensor3 evaluate_with_gradient(const Tensor3& x, double sigma, const OutputGradient& upstream,
                                         std::span<double> grad) const = 0;
};

struct ConvShape {
  std::uint32_t out = 0;
  std::uint32_t in = 0;
  std::uint32_t kh = 3;
  std::uint32_t kw = 3;

  std::size_t weight_count() const { return std::size_t{out} * in * kh * kw; }
  std::size_t param_count() const { return weight_count() + out; }
  friend bool operator==(const ConvShape&, const ConvShape&) = default;
};

namespace detail {

// dst[c] += w * src[(c + dx) mod n] for dx in {-1, 0, 1}
inline void axpy_shifted(double* dst, const double* src, std::size_t n, int dx, double w) {
  if (dx == 0) {
    for (std::size_t c = 0; c < n; ++c) dst[c] += w * src[c];
  } else if (dx < 0) {
    dst[0] += w * src[n - 1];
    for (std::size_t c = 1; c < n; ++c) dst[c] += w * src[c - 1];
  } else {
    for (std::size_t c = 0; c + 1 < n; ++c) dst[c] += w * src[c + 1];
    dst[n - 1] += w * src[0];
  }
}

// sum_c a[c] * b[(c + dx) mod n]
inline double dot_shifted(const double* a, const double* b, std::size_t n, int dx) {
  double s = 0.0;
  if (dx == 0) {
    for (std::size_t c = 0; c < n; ++c) s += a[c] * b[c];
  } else if (dx < 0) {
    s += a[0] * b[n - 1];
    for (std::size_t c = 1; c < n; ++c) s += a[c] * b[c - 1];
  } else {
    for (std::size_t c = 0; c + 1 < n; ++c) s += a[c] * b[c + 1];
    s += a[n - 1] * b[0];
  }
  return s;
}

inline std::size_t wrap(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

// 3x3 convolution (cross-correlation) with periodic padding.
inline Tensor3 conv3x3(const Tensor3& in, const ConvShape& s, std::span<const double> w, std::span<const double> b) {
  const std::size_t H = in.height(), W = in.width();
  Tensor3 out(s.out, H, W);
  for (std::size_t o = 0; o < s.out; ++o) {
    auto op = out.plane(o);
    for (double& v : op) v = b[o];
    for (std::size_t i = 0; i < s.in; ++i) {
      auto ip = in.plane(i);
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double wk = w[((o * s.in + i) * 3 + ky) * 3 + kx];
          if (wk == 0.0) continue;
          for (std::size_t r = 0; r < H; ++r) {
            const std::size_t rr = wrap(static_cast<std::ptrdiff_t>(r) + ky - 1, H);
            axpy_shifted(op.data() + r * W, ip.data() + rr * W, W, kx - 1, wk);
          }
        }
      }
    }
  }
  return out;
}

// Given dL/dout, accumulates dL/dw and dL/db and returns dL/din (if wanted).
inline Tensor3 conv3x3_backward(const Tensor3& in, const Tensor3& dout, const ConvShape& s,
                                std::span<const double> w, std::span<double> dw, std::span<double> db,
                                bool want_input_grad) {
  const std::size_t H = in.height(), W = in.width();
  Tensor3 din;
  if (want_input_grad) din = Tensor3(s.in, H, W);
  for (std::size_t o = 0; o < s.out; ++o) {
    auto gp = dout.plane(o);
    double bsum = 0.0;
    for (double v : gp) bsum += v;
    db[o] += bsum;
    for (std::size_t i = 0; i < s.in; ++i) {
      auto ip = in.plane(i);
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const std::size_t widx = ((o * s.in + i) * 3 + ky) * 3 + kx;
          double acc = 0.0;
          for (std::size_t r = 0; r < H; ++r) {
            const std::size_t rr = wrap(static_cast<std::ptrdiff_t>(r) + ky - 1, H);
            acc += dot_shifted(gp.data() + r * W, ip.data() + rr * W, W, kx - 1);
          }
          dw[widx] += acc;
          if (want_input_grad) {
            // in[rr][c + dx] receives w * dout[r][c]  <=>  din[r'][c'] += w * dout[r' - dy][c' - dx]
            const double wk = w[widx];
            auto dp = din.plane(i);
            for (std::size_t r = 0; r < H; ++r) {
              const std::size_t rr = wrap(static_cast<std::ptrdiff_t>(r) + ky - 1, H);
              axpy_shifted(dp.data() + rr * W, gp.data() + r * W, W, -(kx - 1), wk);
            }
          }
        }
      }
    }
  }
  return din;
}

}  // namespace detail

// Three 3x3 periodic convolutions with ReLU between them. The input is scaled
// by 1/sqrt(1 + sigma^2) and augmented with a constant log(sigma) plane; the
// raw output is divided by sigma.
class TinyDenoiser final : public TrainableScoreModel {
 public:
  TinyDenoiser(std::size_t channels, std::size_t hidden, std::uint64_t seed, double init_gain = 1.0)
      : channels_(channels), hidden_(hidden) {
    require(channels > 0 && hidden > 0, "tiny denoiser needs positive channel and hidden sizes");
    build_shapes();
    params_.assign(param_count(), 0.0);
    Rng rng(seed);
    for (std::size_t l = 0; l < shapes_.size(); ++l) {
      const double fan_in = static_cast<double>(shapes_[l].in * 9);
      const double std = init_gain * std::sqrt(2.0 / fan_in) * (l + 1 == shapes_.size() ? 0.5 : 1.0);
      auto w = weights(l);
      for (double& v : w) v = std * rng.normal();
    }
  }

  TinyDenoiser(std::vector<ConvShape> shapes, std::vector<double> params)
      : shapes_(std::move(shapes)), params_(std::move(params)) {
    require(shapes_.size() == 3, "tiny denoiser checkpoint must have exactly 3 layers");
    channels_ = shapes_[2].out;
    hidden_ = shapes_[0].out;
    require(shapes_[0].in == channels_ + 1 && shapes_[1].in == hidden_ && shapes_[1].out == hidden_ &&
                shapes_[2].in == hidden_,
            "tiny denoiser checkpoint has inconsistent layer shapes");
    for (const auto& s : shapes_) require(s.kh == 3 && s.kw == 3, "tiny denoiser layers must be 3x3");
    require(params_.size() == param_count(), "tiny denoiser checkpoint parameter count mismatch");
  }

  std::size_t channels() const { return channels_; }
  std::size_t hidden() const { return hidden_; }
  const std::vector<ConvShape>& shapes() const { return shapes_; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& s : shapes_) n += s.param_count();
    return n;
  }

  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }

  std::size_t layer_offset(std::size_t l) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < l; ++i) off += shapes_[i].param_count();
    return off;
  }
  std::span<double> weights(std::size_t l) {
    return std::span<double>(params_).subspan(layer_offset(l), shapes_[l].weight_count());
  }
  std::span<double> biases(std::size_t l) {
    return std::span<double>(params_).subspan(layer_offset(l) + shapes_[l].weight_count(), shapes_[l].out);
  }

  std::string name() const override { return "tiny-denoiser"; }
  std::size_t input_planes() const override { return channels_; }

  Tensor3 evaluate(const Tensor3& x, double sigma) const override {
    Activations a = forward(x, sigma);
    return std::move(a.output);
  }

  Tensor3 evaluate_with_gradient(const Tensor3& x, double sigma, const OutputGradient& upstream,
                                 std::span<double> grad) const override {
    require(grad.size() == params_.size(), "gradient buffer size mismatch");
    Activations a = forward(x, sigma);
    Tensor3 g = upstream(a.output);
    require(g.same_shape(a.output), "upstream gradient shape mismatch");
    for (double& v : g.values()) v /= sigma;  // output = z3 / sigma
    backward(a, g, grad);
    return std::move(a.output);
  }

 private:
  struct Activations {
    Tensor3 input;   // scaled x plus the log-sigma plane
    Tensor3 z1, a1;  // pre/post ReLU
    Tensor3 z2, a2;
    Tensor3 output;
  };

  void build_shapes() {
    const auto c = static_cast<std::uint32_t>(channels_);
    const auto h = static_cast<std::uint32_t>(hidden_);
    shapes_ = {{h, c + 1, 3, 3}, {h, h, 3, 3}, {c, h, 3, 3}};
  }

  std::span<const double> cweights(std::size_t l) const {
    return std::span<const double>(params_).subspan(layer_offset(l), shapes_[l].weight_count());
  }
  std::span<const double> cbiases(std::size_t l) const {
    return std::span<const double>(params_).subspan(layer_offset(l) + shapes_[l].weight_count(), shapes_[l].out);
  }

  static Tensor3 relu(const Tensor3& z) {
    Tensor3 a = z;
    for (double& v : a.values()) v = v > 0.0 ? v : 0.0;
    return a;
  }

  Activations forward(const Tensor3& x, double sigma) const {
    require(x.channels() == channels_, "tiny denoiser expects " + std::to_string(channels_) + " channels, got " +
                                           std::to_string(x.channels()));
    require(sigma > 0.0, "tiny denoiser needs sigma > 0");
    Activations a;
    a.input = Tensor3(channels_ + 1, x.height(), x.width());
    const double c_in = 1.0 / std::sqrt(1.0 + sigma * sigma);
    for (std::size_t i = 0; i < x.size(); ++i) a.input[i] = c_in * x[i];
    for (double& v : a.input.plane(channels_)) v = std::log(sigma);
    a.z1 = detail::conv3x3(a.input, shapes_[0], cweights(0), cbiases(0));
    a.a1 = relu(a.z1);
    a.z2 = detail::conv3x3(a.a1, shapes_[1], cweights(1), cbiases(1));
    a.a2 = relu(a.z2);
    a.output = detail::conv3x3(a.a2, shapes_[2], cweights(2), cbiases(2));
    for (double& v : a.output.values()) v /= sigma;
    return a;
  }

  void backward(const Activations& a, const Tensor3& dz3, std::span<double> grad) const {
    auto dw = [&](std::size_t l) { return grad.subspan(layer_offset(l), shapes_[l].weight_count()); };
    auto db = [&](std::size_t l) {
      return grad.subspan(layer_offset(l) + shapes_[l].weight_count(), shapes_[l].out);
    };
    Tensor3 da2 = detail::conv3x3_backward(a.a2, dz3, shapes_[2], cweights(2), dw(2), db(2), true);
    for (std::size_t i = 0; i < da2.size(); ++i)
      if (a.z2[i] <= 0.0) da2[i] = 0.0;
    Tensor3 da1 = detail::conv3x3_backward(a.a1, da2, shapes_[1], cweights(1), dw(1), db(1), true);
    for (std::size_t i = 0; i < da1.size(); ++i)
      if (a.z1[i] <= 0.0) da1[i] = 0.0;
    detail::conv3x3_backward(a.input, da1, shapes_[0], cweights(0), dw(0), db(0), false);
  }

  std::size_t channels_ = 0;
  std::size_t hidden_ = 0;
  std::vector<ConvShape> shapes_;
  std::vector<double> params_;
};

inline std::shared_ptr<TinyDenoiser> tiny_denoiser(std::size_t channels, std::size_t hidden, std::uint64_t seed) {
  return std::make_shared<TinyDenoiser>(channels, hidden, seed);
}

// ---- Adam -------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {
    require(cfg.beta1 > 0.0 && cfg.beta1 < 1.0 && cfg.beta2 > 0.0 && cfg.beta2 < 1.0,
            "Adam betas must lie in (0,1)");
    require(cfg.learning_rate > 0.0, "learning rate must be positive");
  }

  void step(std::span<double> params, std::span<const double> grad) {
    require(params.size() == m_.size() && grad.size() == m_.size(), "Adam: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      params[i] -= cfg_.learning_rate * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + cfg_.epsilon);
    }
  }

  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

// ---- SCM1 checkpoints ----------------------------------------------------------------
// "SCM1", u32 layer count, then per layer u32 out, in, kh, kw; then every
// layer's weights (out, in, kh, kw order) followed by its biases, as f64.

inline std::string encode_scm1(const TinyDenoiser& model) {
  std::string out = "SCM1";
  io::put_u32(out, static_cast<std::uint32_t>(model.shapes().size()));
  for (const auto& s : model.shapes()) {
    io::put_u32(out, s.out);
    io::put_u32(out, s.in);
    io::put_u32(out, s.kh);
    io::put_u32(out, s.kw);
  }
  for (double p : model.parameters()) io::put_f64(out, p);
  return out;
}

inline TinyDenoiser decode_scm1(std::string bytes, const std::string& source = "<memory>") {
  io::ByteReader r(std::move(bytes), source);
  r.expect_magic("SCM1");
  const auto layers = r.u32();
  if (layers == 0 || layers > 64) throw IoError(source + ": implausible layer count");
  std::vector<ConvShape> shapes(layers);
  std::size_t total = 0;
  for (auto& s : shapes) {
    s = {r.u32(), r.u32(), r.u32(), r.u32()};
    total += s.param_count();
  }
  std::vector<double> params(total);
  for (double& p : params) p = r.f64();
  if (!r.at_end()) throw IoError(source + ": trailing bytes after SCM1 payload");
  try {
    return TinyDenoiser(std::move(shapes), std::move(params));
  } catch (const ValidationError& e) {
    throw IoError(source + ": " + e.what());
  }
}

inline void save_checkpoint(const io::fs::path& path, const TinyDenoiser& model) {
  io::write_file_atomic(path, encode_scm1(model));
}

inline std::shared_ptr<TinyDenoiser> load_checkpoint(const io::fs::path& path) {
  return std::make_shared<TinyDenoiser>(decode_scm1(io::read_file(path), path.string()));
}

}  // namespace amdm
