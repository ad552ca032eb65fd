#include "qsim/layers.hpp"

#include <cmath>

#include "qsim/error.hpp"

namespace qsim {

Tensor Layer::forward2(const Tensor&, const Tensor&,
                       std::unique_ptr<LayerCtx>&) {
  throw StateError(std::string(kind()) + ": forward2 not supported");
}

namespace {

std::string param_name(int64_t index, const char* field) {
  return "layer" + std::to_string(index) + "." + field;
}

Tensor he_normal(std::vector<int64_t> shape, int64_t fan_in,
                 RandomSource& rng) {
  Tensor t(std::move(shape));
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.numel(); ++i) {
    t[i] = static_cast<float>(rng.normal() * std);
  }
  return t;
}

// ---------------------------------------------------------------- Conv2d

struct ConvCtx final : LayerCtx {
  Tensor x;
  Tensor w;  // weights actually used (quantized image when overridden)
};

class Conv2dLayer final : public Layer {
 public:
  Conv2dLayer(int64_t c_in, const LayerSpec& s, int64_t index,
              RandomSource& rng)
      : c_in_(c_in),
        c_out_(s.c_out),
        k_(s.k),
        stride_(s.stride),
        pad_(s.pad),
        groups_(s.groups) {
    if (c_out_ <= 0 || k_ <= 0 || stride_ <= 0 || pad_ < 0 || groups_ <= 0) {
      throw GeometryError("conv layer: bad geometry");
    }
    if (c_in_ % groups_ != 0 || c_out_ % groups_ != 0) {
      throw GeometryError("conv layer: channels not divisible by groups");
    }
    const int64_t c_in_g = c_in_ / groups_;
    weight_.name = param_name(index, "weight");
    weight_.value = he_normal({c_out_, c_in_g, k_, k_}, c_in_g * k_ * k_, rng);
    weight_.grad = Tensor({c_out_, c_in_g, k_, k_});
    if (s.bias) {
      bias_.name = param_name(index, "bias");
      bias_.value = Tensor({c_out_});
      bias_.grad = Tensor({c_out_});
      has_bias_ = true;
    }
  }

  LayerType type() const override { return LayerType::Conv2d; }
  const char* kind() const override { return "conv2d"; }

  Tensor forward(const Tensor& x, Mode mode, const Tensor* weights_override,
                 std::unique_ptr<LayerCtx>& ctx) override {
    const Tensor& w = weights_override ? *weights_override : weight_.value;
    Tensor y = conv2d(x, w, stride_, pad_, groups_);
    if (has_bias_) {
      const int64_t n = y.extent(0);
      const int64_t hw = y.extent(2) * y.extent(3);
      float* py = y.data();
      for (int64_t in = 0; in < n; ++in) {
        for (int64_t oc = 0; oc < c_out_; ++oc) {
          const float b = bias_.value[oc];
          float* row = py + (in * c_out_ + oc) * hw;
          for (int64_t i = 0; i < hw; ++i) {
            row[i] += b;
          }
        }
      }
    }
    if (mode == Mode::Train) {
      auto c = std::make_unique<ConvCtx>();
      c->x = x;
      c->w = w;
      ctx = std::move(c);
    }
    return y;
  }

  Tensor backward(const Tensor& gy, const LayerCtx& ctx,
                  bool want_gx) override {
    const auto& c = static_cast<const ConvCtx&>(ctx);
    const Tensor& x = c.x;
    const Tensor& w = c.w;
    const int64_t n = x.extent(0);
    const int64_t h = x.extent(2);
    const int64_t ww = x.extent(3);
    const int64_t oh = gy.extent(2);
    const int64_t ow = gy.extent(3);
    const int64_t c_in_g = c_in_ / groups_;
    const int64_t oc_g = c_out_ / groups_;
    const float* px = x.data();
    const float* pw = w.data();
    const float* pg = gy.data();

    // Weight gradient: exact correlation of input with output gradient,
    // accumulated in f64 over ascending (n, oy, ox).
    float* pgw = weight_.grad.data();
    for (int64_t oc = 0; oc < c_out_; ++oc) {
      const int64_t g = oc / oc_g;
      for (int64_t icg = 0; icg < c_in_g; ++icg) {
        const int64_t ic = g * c_in_g + icg;
        for (int64_t ky = 0; ky < k_; ++ky) {
          for (int64_t kx = 0; kx < k_; ++kx) {
            double acc = 0.0;
            for (int64_t in = 0; in < n; ++in) {
              const float* xp = px + ((in * c_in_ + ic) * h) * ww;
              const float* gp = pg + ((in * c_out_ + oc) * oh) * ow;
              for (int64_t oy = 0; oy < oh; ++oy) {
                const int64_t iy = oy * stride_ - pad_ + ky;
                if (iy < 0 || iy >= h) {
                  continue;
                }
                for (int64_t ox = 0; ox < ow; ++ox) {
                  const int64_t ix = ox * stride_ - pad_ + kx;
                  if (ix < 0 || ix >= ww) {
                    continue;
                  }
                  acc += static_cast<double>(gp[oy * ow + ox]) *
                         static_cast<double>(xp[iy * ww + ix]);
                }
              }
            }
            const int64_t wi = ((oc * c_in_g + icg) * k_ + ky) * k_ + kx;
            pgw[wi] += static_cast<float>(acc);
          }
        }
      }
    }

    if (has_bias_) {
      for (int64_t oc = 0; oc < c_out_; ++oc) {
        double acc = 0.0;
        for (int64_t in = 0; in < n; ++in) {
          const float* gp = pg + ((in * c_out_ + oc) * oh) * ow;
          for (int64_t i = 0; i < oh * ow; ++i) {
            acc += static_cast<double>(gp[i]);
          }
        }
        bias_.grad[oc] += static_cast<float>(acc);
      }
    }

    if (!want_gx) {
      return Tensor();
    }

    // Input gradient: per input element, gather every (oc, ky, kx) whose
    // window covers it, ascending, f64.
    Tensor gx({n, c_in_, h, ww});
    float* pgx = gx.data();
    for (int64_t in = 0; in < n; ++in) {
      for (int64_t ic = 0; ic < c_in_; ++ic) {
        const int64_t g = ic / c_in_g;
        const int64_t icg = ic % c_in_g;
        for (int64_t iy = 0; iy < h; ++iy) {
          for (int64_t ix = 0; ix < ww; ++ix) {
            double acc = 0.0;
            for (int64_t ocg = 0; ocg < oc_g; ++ocg) {
              const int64_t oc = g * oc_g + ocg;
              const float* gp = pg + ((in * c_out_ + oc) * oh) * ow;
              const float* wp = pw + ((oc * c_in_g + icg) * k_) * k_;
              for (int64_t ky = 0; ky < k_; ++ky) {
                const int64_t ty = iy + pad_ - ky;
                if (ty < 0 || ty % stride_ != 0) {
                  continue;
                }
                const int64_t oy = ty / stride_;
                if (oy >= oh) {
                  continue;
                }
                for (int64_t kx = 0; kx < k_; ++kx) {
                  const int64_t tx = ix + pad_ - kx;
                  if (tx < 0 || tx % stride_ != 0) {
                    continue;
                  }
                  const int64_t ox = tx / stride_;
                  if (ox >= ow) {
                    continue;
                  }
                  acc += static_cast<double>(gp[oy * ow + ox]) *
                         static_cast<double>(wp[ky * k_ + kx]);
                }
              }
            }
            pgx[((in * c_in_ + ic) * h + iy) * ww + ix] =
                static_cast<float>(acc);
          }
        }
      }
    }
    return gx;
  }

  std::vector<Param*> params() override {
    std::vector<Param*> p{&weight_};
    if (has_bias_) {
      p.push_back(&bias_);
    }
    return p;
  }
  Param* weight_param() override { return &weight_; }

  std::vector<int64_t> out_shape(const std::vector<int64_t>& in) const override {
    if (in.size() != 4 || in[1] != c_in_) {
      throw ShapeError("conv2d: expected input [N," + std::to_string(c_in_) +
                       ",H,W], got " + shape_to_string(in));
    }
    const int64_t num_h = in[2] + 2 * pad_ - k_;
    const int64_t num_w = in[3] + 2 * pad_ - k_;
    if (num_h < 0 || num_w < 0 || num_h % stride_ != 0 ||
        num_w % stride_ != 0) {
      throw GeometryError("conv2d: output extent non-integral for input " +
                          shape_to_string(in));
    }
    return {in[0], c_out_, num_h / stride_ + 1, num_w / stride_ + 1};
  }

 private:
  int64_t c_in_, c_out_, k_, stride_, pad_, groups_;
  bool has_bias_ = false;
  Param weight_;
  Param bias_;
};

// ---------------------------------------------------------------- Linear

struct LinearCtx final : LayerCtx {
  Tensor x;
  Tensor w;
};

class LinearLayer final : public Layer {
 public:
  LinearLayer(int64_t in, const LayerSpec& s, int64_t index, RandomSource& rng)
      : in_(in), out_(s.c_out) {
    if (out_ <= 0) {
      throw GeometryError("linear layer: output size must be positive");
    }
    weight_.name = param_name(index, "weight");
    weight_.value = he_normal({out_, in_}, in_, rng);
    weight_.grad = Tensor({out_, in_});
    if (s.bias) {
      bias_.name = param_name(index, "bias");
      bias_.value = Tensor({out_});
      bias_.grad = Tensor({out_});
      has_bias_ = true;
    }
  }

  LayerType type() const override { return LayerType::Linear; }
  const char* kind() const override { return "linear"; }

  Tensor forward(const Tensor& x, Mode mode, const Tensor* weights_override,
                 std::unique_ptr<LayerCtx>& ctx) override {
    const Tensor& w = weights_override ? *weights_override : weight_.value;
    const int64_t n = x.extent(0);
    Tensor y({n, out_});
    const float* px = x.data();
    const float* pw = w.data();
    float* py = y.data();
    for (int64_t in = 0; in < n; ++in) {
      for (int64_t o = 0; o < out_; ++o) {
        double acc = 0.0;
        for (int64_t i = 0; i < in_; ++i) {
          acc += static_cast<double>(px[in * in_ + i]) *
                 static_cast<double>(pw[o * in_ + i]);
        }
        py[in * out_ + o] = static_cast<float>(acc);
      }
    }
    if (has_bias_) {
      for (int64_t in = 0; in < n; ++in) {
        for (int64_t o = 0; o < out_; ++o) {
          py[in * out_ + o] += bias_.value[o];
        }
      }
    }
    if (mode == Mode::Train) {
      auto c = std::make_unique<LinearCtx>();
      c->x = x;
      c->w = w;
      ctx = std::move(c);
    }
    return y;
  }

  Tensor backward(const Tensor& gy, const LayerCtx& ctx,
                  bool want_gx) override {
    const auto& c = static_cast<const LinearCtx&>(ctx);
    const int64_t n = c.x.extent(0);
    const float* px = c.x.data();
    const float* pw = c.w.data();
    const float* pg = gy.data();

    float* pgw = weight_.grad.data();
    for (int64_t o = 0; o < out_; ++o) {
      for (int64_t i = 0; i < in_; ++i) {
        double acc = 0.0;
        for (int64_t in = 0; in < n; ++in) {
          acc += static_cast<double>(pg[in * out_ + o]) *
                 static_cast<double>(px[in * in_ + i]);
        }
        pgw[o * in_ + i] += static_cast<float>(acc);
      }
    }
    if (has_bias_) {
      for (int64_t o = 0; o < out_; ++o) {
        double acc = 0.0;
        for (int64_t in = 0; in < n; ++in) {
          acc += static_cast<double>(pg[in * out_ + o]);
        }
        bias_.grad[o] += static_cast<float>(acc);
      }
    }
    if (!want_gx) {
      return Tensor();
    }
    Tensor gx({n, in_});
    float* pgx = gx.data();
    for (int64_t in = 0; in < n; ++in) {
      for (int64_t i = 0; i < in_; ++i) {
        double acc = 0.0;
        for (int64_t o = 0; o < out_; ++o) {
          acc += static_cast<double>(pg[in * out_ + o]) *
                 static_cast<double>(pw[o * in_ + i]);
        }
        pgx[in * in_ + i] = static_cast<float>(acc);
      }
    }
    return gx;
  }

  std::vector<Param*> params() override {
    std::vector<Param*> p{&weight_};
    if (has_bias_) {
      p.push_back(&bias_);
    }
    return p;
  }
  Param* weight_param() override { return &weight_; }

  std::vector<int64_t> out_shape(const std::vector<int64_t>& in) const override {
    if (in.size() != 2 || in[1] != in_) {
      throw ShapeError("linear: expected input [N," + std::to_string(in_) +
                       "], got " + shape_to_string(in));
    }
    return {in[0], out_};
  }

 private:
  int64_t in_, out_;
  bool has_bias_ = false;
  Param weight_;
  Param bias_;
};

// ------------------------------------------------------------- BatchNorm

struct BnCtx final : LayerCtx {
  Tensor xhat;
  std::vector<double> ivar;  // per channel, 1/sqrt(var + eps)
  int64_t m = 0;             // elements per channel
};

class BatchNormLayer final : public Layer {
 public:
  BatchNormLayer(int64_t channels, int64_t index) : c_(channels) {
    gamma_.name = param_name(index, "gamma");
    gamma_.value = Tensor::full({c_}, 1.0f);
    gamma_.grad = Tensor({c_});
    beta_.name = param_name(index, "beta");
    beta_.value = Tensor({c_});
    beta_.grad = Tensor({c_});
    running_mean_.name = param_name(index, "running_mean");
    running_mean_.value = Tensor({c_});
    running_var_.name = param_name(index, "running_var");
    running_var_.value = Tensor::full({c_}, 1.0f);
  }

  LayerType type() const override { return LayerType::BatchNorm; }
  const char* kind() const override { return "batchnorm"; }

  Tensor forward(const Tensor& x, Mode mode, const Tensor*,
                 std::unique_ptr<LayerCtx>& ctx) override {
    const int64_t n = x.extent(0);
    const int64_t hw = x.rank() == 4 ? x.extent(2) * x.extent(3) : 1;
    const int64_t m = n * hw;
    const float* px = x.data();

    std::vector<double> mean(c_), ivar(c_);
    if (mode == Mode::Eval) {
      for (int64_t c = 0; c < c_; ++c) {
        mean[c] = static_cast<double>(running_mean_.value[c]);
        ivar[c] = 1.0 / std::sqrt(
                            static_cast<double>(running_var_.value[c]) + eps_);
      }
    } else {
      // Two-pass batch statistics, f64, fixed ascending order.
      std::vector<double> var(c_);
      for (int64_t c = 0; c < c_; ++c) {
        double s = 0.0;
        for (int64_t in = 0; in < n; ++in) {
          const float* row = px + (in * c_ + c) * hw;
          for (int64_t i = 0; i < hw; ++i) {
            s += static_cast<double>(row[i]);
          }
        }
        mean[c] = s / static_cast<double>(m);
        double v = 0.0;
        for (int64_t in = 0; in < n; ++in) {
          const float* row = px + (in * c_ + c) * hw;
          for (int64_t i = 0; i < hw; ++i) {
            const double d = static_cast<double>(row[i]) - mean[c];
            v += d * d;
          }
        }
        var[c] = v / static_cast<double>(m);
        ivar[c] = 1.0 / std::sqrt(var[c] + eps_);
      }
      if (mode == Mode::Train) {
        // EMA running stats for Eval; variance stored unbiased. Calibrate
        // mode deliberately leaves these untouched.
        const double mom = 0.1;
        for (int64_t c = 0; c < c_; ++c) {
          const double rv = m > 1 ? var[c] * static_cast<double>(m) /
                                        static_cast<double>(m - 1)
                                  : var[c];
          running_mean_.value[c] = static_cast<float>(
              (1.0 - mom) * static_cast<double>(running_mean_.value[c]) +
              mom * mean[c]);
          running_var_.value[c] = static_cast<float>(
              (1.0 - mom) * static_cast<double>(running_var_.value[c]) +
              mom * rv);
        }
      }
    }

    Tensor y(x.shape());
    Tensor xhat(x.shape());
    float* py = y.data();
    float* ph = xhat.data();
    for (int64_t in = 0; in < n; ++in) {
      for (int64_t c = 0; c < c_; ++c) {
        const double g = static_cast<double>(gamma_.value[c]);
        const double b = static_cast<double>(beta_.value[c]);
        const float* row = px + (in * c_ + c) * hw;
        float* yrow = py + (in * c_ + c) * hw;
        float* hrow = ph + (in * c_ + c) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          const double xh = (static_cast<double>(row[i]) - mean[c]) * ivar[c];
          hrow[i] = static_cast<float>(xh);
          yrow[i] = static_cast<float>(g * xh + b);
        }
      }
    }
    if (mode == Mode::Train) {
      auto c = std::make_unique<BnCtx>();
      c->xhat = std::move(xhat);
      c->ivar = std::move(ivar);
      c->m = m;
      ctx = std::move(c);
    }
    return y;
  }

  Tensor backward(const Tensor& gy, const LayerCtx& ctx,
                  bool want_gx) override {
    const auto& c = static_cast<const BnCtx&>(ctx);
    const int64_t n = gy.extent(0);
    const int64_t hw = gy.rank() == 4 ? gy.extent(2) * gy.extent(3) : 1;
    const double m = static_cast<double>(c.m);
    const float* pg = gy.data();
    const float* ph = c.xhat.data();

    Tensor gx;
    if (want_gx) {
      gx = Tensor(gy.shape());
    }
    float* pgx = want_gx ? gx.data() : nullptr;
    for (int64_t ch = 0; ch < c_; ++ch) {
      const double g = static_cast<double>(gamma_.value[ch]);
      double sum_g = 0.0;   // sum of gy
      double sum_gh = 0.0;  // sum of gy * xhat
      for (int64_t in = 0; in < n; ++in) {
        const float* grow = pg + (in * c_ + ch) * hw;
        const float* hrow = ph + (in * c_ + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          sum_g += static_cast<double>(grow[i]);
          sum_gh += static_cast<double>(grow[i]) * static_cast<double>(hrow[i]);
        }
      }
      gamma_.grad[ch] += static_cast<float>(sum_gh);
      beta_.grad[ch] += static_cast<float>(sum_g);
      if (!want_gx) {
        continue;
      }
      const double k = g * c.ivar[ch] / m;
      for (int64_t in = 0; in < n; ++in) {
        const float* grow = pg + (in * c_ + ch) * hw;
        const float* hrow = ph + (in * c_ + ch) * hw;
        float* xrow = pgx + (in * c_ + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          const double t = m * static_cast<double>(grow[i]) - sum_g -
                           static_cast<double>(hrow[i]) * sum_gh;
          xrow[i] = static_cast<float>(k * t);
        }
      }
    }
    return gx;
  }

  std::vector<Param*> params() override { return {&gamma_, &beta_}; }
  std::vector<Param*> buffers() override {
    return {&running_mean_, &running_var_};
  }

  std::vector<int64_t> out_shape(const std::vector<int64_t>& in) const override {
    if ((in.size() != 2 && in.size() != 4) || in[1] != c_) {
      throw ShapeError("batchnorm: expected [N," + std::to_string(c_) +
                       ",...], got " + shape_to_string(in));
    }
    return in;
  }

 private:
  int64_t c_;
  const double eps_ = 1e-5;
  Param gamma_, beta_;
  Param running_mean_, running_var_;  // grad slots unused
};

// ------------------------------------------------------------------ ReLU

struct ReluCtx final : LayerCtx {
  Tensor x;
};

class ReluLayer final : public Layer {
 public:
  LayerType type() const override { return LayerType::ReLU; }
  const char* kind() const override { return "relu"; }

  Tensor forward(const Tensor& x, Mode mode, const Tensor*,
                 std::unique_ptr<LayerCtx>& ctx) override {
    Tensor y(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) {
      y[i] = x[i] > 0.0f ? x[i] : 0.0f;
    }
    if (mode == Mode::Train) {
      auto c = std::make_unique<ReluCtx>();
      c->x = x;
      ctx = std::move(c);
    }
    return y;
  }

  Tensor backward(const Tensor& gy, const LayerCtx& ctx,
                  bool want_gx) override {
    if (!want_gx) {
      return Tensor();
    }
    const auto& c = static_cast<const ReluCtx&>(ctx);
    Tensor gx(gy.shape());
    for (int64_t i = 0; i < gy.numel(); ++i) {
      gx[i] = c.x[i] > 0.0f ? gy[i] : 0.0f;
    }
    return gx;
  }

  std::vector<int64_t> out_shape(const std::vector<int64_t>& in) const override {
    return in;
  }
};

// --------------------------------------------------------------- MaxPool

struct PoolCtx final : LayerCtx {
  std::vector<int64_t> argmax;  // flat input index per output element
  std::vector<int64_t> in_shape;
};

class MaxPoolLayer final : public Layer {
 public:
  MaxPoolLayer(int64_t k, int64_t stride) : k_(k), stride_(stride) {
    if (k_ <= 0 || stride_ <= 0) {
      throw GeometryError("maxpool: kernel and stride must be positive");
    }
  }

  LayerType type() const override { return LayerType::MaxPool; }
  const char* kind() const override { return "maxpool"; }

  Tensor forward(const Tensor& x, Mode mode, const Tensor*,
                 std::unique_ptr<LayerCtx>& ctx) override {
    const auto os = out_shape(x.shape());
    const int64_t n = x.extent(0);
    const int64_t c = x.extent(1);
    const int64_t h = x.extent(2);
    const int64_t w = x.extent(3);
    const int64_t oh = os[2];
    const int64_t ow = os[3];
    Tensor y(os);
    std::vector<int64_t> argmax(static_cast<size_t>(y.numel()));
    const float* px = x.data();
    float* py = y.data();
    int64_t oi = 0;
    for (int64_t in = 0; in < n; ++in) {
      for (int64_t ch = 0; ch < c; ++ch) {
        const float* plane = px + (in * c + ch) * h * w;
        const int64_t base = (in * c + ch) * h * w;
        for (int64_t oy = 0; oy < oh; ++oy) {
          for (int64_t ox = 0; ox < ow; ++ox, ++oi) {
            // First maximum in scan order wins; ties are deterministic.
            int64_t best = (oy * stride_) * w + ox * stride_;
            float bv = plane[best];
            for (int64_t ky = 0; ky < k_; ++ky) {
              for (int64_t kx = 0; kx < k_; ++kx) {
                const int64_t idx =
                    (oy * stride_ + ky) * w + (ox * stride_ + kx);
                if (plane[idx] > bv) {
                  bv = plane[idx];
                  best = idx;
                }
              }
            }
            py[oi] = bv;
            argmax[static_cast<size_t>(oi)] = base + best;
          }
        }
      }
    }
    if (mode == Mode::Train) {
      auto cx = std::make_unique<PoolCtx>();
      cx->argmax = std::move(argmax);
      cx->in_shape = x.shape();
      ctx = std::move(cx);
    }
    return y;
  }

  Tensor backward(const Tensor& gy, const LayerCtx& ctx,
                  bool want_gx) override {
    if (!want_gx) {
      return Tensor();
    }
    const auto& c = static_cast<const PoolCtx&>(ctx);
    Tensor gx(c.in_shape);
    for (int64_t i = 0; i < gy.numel(); ++i) {
      gx[c.argmax[static_cast<size_t>(i)]] += gy[i];
    }
    return gx;
  }

  std::vector<int64_t> out_shape(const std::vector<int64_t>& in) const override {
    if (in.size() != 4) {
      throw ShapeError("maxpool: expected 4-D input, got " +
                       shape_to_string(in));
    }
    const int64_t nh = in[2] - k_;
    const int64_t nw = in[3] - k_;
    if (nh < 0 || nw < 0 || nh % stride_ != 0 || nw % stride_ != 0) {
      throw GeometryError("maxpool: output extent non-integral for input " +
                          shape_to_string(in));
    }
    return {in[0], in[1], nh / stride_ + 1, nw / stride_ + 1};
  }

 private:
  int64_t k_, stride_;
};

// --------------------------------------------------------- GlobalAvgPool

struct GapCtx final : LayerCtx {
  std::vector<int64_t> in_shape;
};

class GlobalAvgPoolLayer final : public Layer {
 public:
  LayerType type() const override { return LayerType::GlobalAvgPool; }
  const char* kind() const override { return "global_avg_pool"; }

  Tensor forward(const Tensor& x, Mode mode, const Tensor*,
                 std::unique_ptr<LayerCtx>& ctx) override {
    const int64_t n = x.extent(0);
    const int64_t c = x.extent(1);
    const int64_t hw = x.extent(2) * x.extent(3);
    Tensor y({n, c});
    const float* px = x.data();
    for (int64_t in = 0; in < n; ++in) {
      for (int64_t ch = 0; ch < c; ++ch) {
        const float* plane = px + (in * c + ch) * hw;
        double acc = 0.0;
        for (int64_t i = 0; i < hw; ++i) {
          acc += static_cast<double>(plane[i]);
        }
        y[in * c + ch] = static_cast<float>(acc / static_cast<double>(hw));
      }
    }
    if (mode == Mode::Train) {
      auto cx = std::make_unique<GapCtx>();
      cx->in_shape = x.shape();
      ctx = std::move(cx);
    }
    return y;
  }

  Tensor backward(const Tensor& gy, const LayerCtx& ctx,
                  bool want_gx) override {
    if (!want_gx) {
      return Tensor();
    }
    const auto& c = static_cast<const GapCtx&>(ctx);
    const int64_t n = c.in_shape[0];
    const int64_t ch = c.in_shape[1];
    const int64_t hw = c.in_shape[2] * c.in_shape[3];
    Tensor gx(c.in_shape);
    float* pgx = gx.data();
    for (int64_t in = 0; in < n; ++in) {
      for (int64_t cc = 0; cc < ch; ++cc) {
        const float v = static_cast<float>(
            static_cast<double>(gy[in * ch + cc]) / static_cast<double>(hw));
        float* plane = pgx + (in * ch + cc) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          plane[i] = v;
        }
      }
    }
    return gx;
  }

  std::vector<int64_t> out_shape(const std::vector<int64_t>& in) const override {
    if (in.size() != 4) {
      throw ShapeError("global_avg_pool: expected 4-D input, got " +
                       shape_to_string(in));
    }
    return {in[0], in[1]};
  }
};

// ----------------------------------------------------------- ResidualAdd

class ResidualAddLayer final : public Layer {
 public:
  explicit ResidualAddLayer(int64_t source) : source_(source) {
    if (source_ < 0) {
      throw GeometryError("residual_add: source index must be >= 0");
    }
  }

  LayerType type() const override { return LayerType::ResidualAdd; }
  const char* kind() const override { return "residual_add"; }
  int64_t residual_source() const override { return source_; }

  Tensor forward(const Tensor&, Mode, const Tensor*,
                 std::unique_ptr<LayerCtx>&) override {
    throw StateError("residual_add: use forward2");
  }

  Tensor forward2(const Tensor& x, const Tensor& skip,
                  std::unique_ptr<LayerCtx>&) override {
    if (!x.same_shape(skip)) {
      throw ShapeError("residual_add: shape mismatch, " + x.shape_str() +
                       " vs " + skip.shape_str());
    }
    Tensor y(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) {
      y[i] = x[i] + skip[i];
    }
    return y;
  }

  // Pass-through; the model routes the same gy into the skip source.
  Tensor backward(const Tensor& gy, const LayerCtx&, bool want_gx) override {
    return want_gx ? gy : Tensor();
  }

  std::vector<int64_t> out_shape(const std::vector<int64_t>& in) const override {
    return in;
  }

 private:
  int64_t source_;
};

}  // namespace

std::unique_ptr<Layer> make_layer(const LayerSpec& spec,
                                  const std::vector<int64_t>& in_shape,
                                  int64_t index, RandomSource& rng) {
  switch (spec.type) {
    case LayerType::Conv2d:
      if (in_shape.size() != 4) {
        throw ShapeError("conv2d at layer " + std::to_string(index) +
                         ": needs 4-D input, got " +
                         shape_to_string(in_shape));
      }
      return std::make_unique<Conv2dLayer>(in_shape[1], spec, index, rng);
    case LayerType::Linear:
      if (in_shape.size() != 2) {
        throw ShapeError("linear at layer " + std::to_string(index) +
                         ": needs 2-D input, got " +
                         shape_to_string(in_shape));
      }
      return std::make_unique<LinearLayer>(in_shape[1], spec, index, rng);
    case LayerType::BatchNorm:
      if (in_shape.size() != 2 && in_shape.size() != 4) {
        throw ShapeError("batchnorm at layer " + std::to_string(index) +
                         ": needs 2-D or 4-D input");
      }
      return std::make_unique<BatchNormLayer>(in_shape[1], index);
    case LayerType::ReLU:
      return std::make_unique<ReluLayer>();
    case LayerType::MaxPool:
      return std::make_unique<MaxPoolLayer>(spec.k, spec.stride);
    case LayerType::GlobalAvgPool:
      return std::make_unique<GlobalAvgPoolLayer>();
    case LayerType::ResidualAdd:
      return std::make_unique<ResidualAddLayer>(spec.source);
  }
  throw ValueError("make_layer: unknown layer type");
}

}  // namespace qsim
