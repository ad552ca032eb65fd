#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace qsim {

// Dense row-major f32 tensor. Payloads are f32 project-wide; ops that sum
// (matmul, conv2d) accumulate in f64 with a fixed ascending-index order and
// round once at the end, so every op is bitwise reproducible.
class Tensor {
 public:
  /// Placeholder (numel 0). Ops reject it; useful for containers and
  /// deferred initialization only.
  Tensor() = default;

  /// Zero-filled tensor. Extents must be positive.
  explicit Tensor(std::vector<int64_t> shape);

  static Tensor full(std::vector<int64_t> shape, float value);

  /// Takes ownership of data; validates size and rejects NaN/Inf.
  static Tensor from_data(std::vector<int64_t> shape, std::vector<float> data);

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  int64_t extent(int64_t axis) const { return shape_[axis]; }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float& operator[](int64_t i) { return data_[i]; }
  float operator[](int64_t i) const { return data_[i]; }

  /// Same data, new shape with identical element count.
  Tensor reshaped(std::vector<int64_t> new_shape) const;

  std::string shape_str() const;

 private:
  std::vector<int64_t> shape_;
  std::vector<float> data_;
};

std::string shape_to_string(const std::vector<int64_t>& shape);

/// Exact product with fixed (ascending inner index) summation order.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Cross-correlation of x[N,C_in,H,W] with w[C_out,C_in/groups,k,k].
/// groups == C_in gives a depthwise convolution.
Tensor conv2d(const Tensor& x, const Tensor& w, int64_t stride, int64_t pad,
              int64_t groups);

/// Exact (min, max) over all elements; -0.0 canonicalized to +0.0.
std::pair<float, float> reduce_min_max(const Tensor& t);

/// f64 dot product over flattened elements, ascending index.
double dot_f64(const Tensor& a, const Tensor& b);

/// Throws ValueError naming `what` if any element is NaN/Inf.
void check_finite(const Tensor& t, const char* what);

}  // namespace qsim
