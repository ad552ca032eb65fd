#include "qsim/tensor.hpp"

#include <cmath>
#include <sstream>

#include "qsim/error.hpp"
#include "qsim/kernels.hpp"

namespace qsim {
namespace {

int64_t checked_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t e : shape) {
    if (e <= 0) {
      throw ShapeError("tensor extent must be positive, got shape " +
                       shape_to_string(shape));
    }
    n *= e;
  }
  return n;
}

}  // namespace

std::string shape_to_string(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "x" : "") << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int64_t> shape) {
  const int64_t n = checked_numel(shape);
  shape_ = std::move(shape);
  data_.assign(static_cast<size_t>(n), 0.0f);
}

Tensor Tensor::full(std::vector<int64_t> shape, float value) {
  if (!std::isfinite(value)) {
    throw ValueError("Tensor::full: value must be finite");
  }
  Tensor t(std::move(shape));
  for (auto& v : t.data_) {
    v = value;
  }
  return t;
}

Tensor Tensor::from_data(std::vector<int64_t> shape, std::vector<float> data) {
  const int64_t n = checked_numel(shape);
  if (n != static_cast<int64_t>(data.size())) {
    throw ShapeError("Tensor::from_data: shape " + shape_to_string(shape) +
                     " wants " + std::to_string(n) + " elements, got " +
                     std::to_string(data.size()));
  }
  for (float v : data) {
    if (!std::isfinite(v)) {
      throw ValueError("Tensor::from_data: non-finite element");
    }
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::reshaped(std::vector<int64_t> new_shape) const {
  const int64_t n = checked_numel(new_shape);
  if (n != numel()) {
    throw ShapeError("reshape " + shape_str() + " -> " +
                     shape_to_string(new_shape) + ": element count differs");
  }
  Tensor t;
  t.shape_ = std::move(new_shape);
  t.data_ = data_;
  return t;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

void check_finite(const Tensor& t, const char* what) {
  for (int64_t i = 0; i < t.numel(); ++i) {
    if (!std::isfinite(t[i])) {
      throw ValueError(std::string(what) + ": non-finite element at index " +
                       std::to_string(i));
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw ShapeError("matmul: incompatible shapes " + a.shape_str() + " and " +
                     b.shape_str());
  }
  const int64_t m = a.extent(0);
  const int64_t k = a.extent(1);
  const int64_t n = b.extent(1);
  Tensor out({m, n});
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) {
        acc += static_cast<double>(pa[i * k + p]) *
               static_cast<double>(pb[p * n + j]);
      }
      po[i * n + j] = static_cast<float>(acc);
    }
  }
#ifndef NDEBUG
  check_finite(out, "matmul");
#endif
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, int64_t stride, int64_t pad,
              int64_t groups) {
  if (x.rank() != 4 || w.rank() != 4) {
    throw ShapeError("conv2d: expected 4-D input and weight, got " +
                     x.shape_str() + " and " + w.shape_str());
  }
  if (stride < 1 || pad < 0 || groups < 1) {
    throw GeometryError("conv2d: stride must be >= 1, pad >= 0, groups >= 1");
  }
  const int64_t n = x.extent(0);
  const int64_t c_in = x.extent(1);
  const int64_t h = x.extent(2);
  const int64_t ww = x.extent(3);
  const int64_t c_out = w.extent(0);
  const int64_t c_in_g = w.extent(1);
  const int64_t kh = w.extent(2);
  const int64_t kw = w.extent(3);
  if (kh != kw) {
    throw GeometryError("conv2d: kernel must be square, got " + w.shape_str());
  }
  if (c_in % groups != 0 || c_out % groups != 0) {
    throw GeometryError("conv2d: channels (" + std::to_string(c_in) + "->" +
                        std::to_string(c_out) + ") not divisible by groups=" +
                        std::to_string(groups));
  }
  if (c_in_g != c_in / groups) {
    throw GeometryError("conv2d: weight expects " + std::to_string(c_in_g) +
                        " channels per group, input has " +
                        std::to_string(c_in / groups));
  }
  const int64_t oh_num = h + 2 * pad - kh;
  const int64_t ow_num = ww + 2 * pad - kw;
  if (oh_num < 0 || ow_num < 0 || oh_num % stride != 0 ||
      ow_num % stride != 0) {
    throw GeometryError("conv2d: output extent non-integral for input " +
                        x.shape_str() + ", k=" + std::to_string(kh) +
                        ", stride=" + std::to_string(stride) +
                        ", pad=" + std::to_string(pad));
  }
  const int64_t oh = oh_num / stride + 1;
  const int64_t ow = ow_num / stride + 1;
  const int64_t oc_g = c_out / groups;

  Tensor out({n, c_out, oh, ow});
  const float* px = x.data();
  const float* pw = w.data();
  float* po = out.data();
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t g = 0; g < groups; ++g) {
      for (int64_t ocg = 0; ocg < oc_g; ++ocg) {
        const int64_t oc = g * oc_g + ocg;
        for (int64_t oy = 0; oy < oh; ++oy) {
          for (int64_t ox = 0; ox < ow; ++ox) {
            double acc = 0.0;
            for (int64_t icg = 0; icg < c_in_g; ++icg) {
              const int64_t ic = g * c_in_g + icg;
              const float* xrow = px + ((in * c_in + ic) * h) * ww;
              const float* wrow = pw + ((oc * c_in_g + icg) * kh) * kw;
              for (int64_t ky = 0; ky < kh; ++ky) {
                const int64_t iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= h) {
                  continue;
                }
                for (int64_t kx = 0; kx < kw; ++kx) {
                  const int64_t ix = ox * stride - pad + kx;
                  if (ix < 0 || ix >= ww) {
                    continue;
                  }
                  acc += static_cast<double>(xrow[iy * ww + ix]) *
                         static_cast<double>(wrow[ky * kw + kx]);
                }
              }
            }
            po[((in * c_out + oc) * oh + oy) * ow + ox] =
                static_cast<float>(acc);
          }
        }
      }
    }
  }
#ifndef NDEBUG
  check_finite(out, "conv2d");
#endif
  return out;
}

std::pair<float, float> reduce_min_max(const Tensor& t) {
  if (t.numel() == 0) {
    throw ValueError("reduce_min_max: empty tensor");
  }
  float lo = 0.0f;
  float hi = 0.0f;
  kernels::active().min_max(t.data(), t.numel(), &lo, &hi);
  return {lo, hi};
}

double dot_f64(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("dot_f64: shapes differ, " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

}  // namespace qsim
