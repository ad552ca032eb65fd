#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "qsim/random.hpp"
#include "qsim/tensor.hpp"

namespace qsim {

enum class Mode { Train, Eval, Calibrate };

// Trainable tensor plus its gradient slot. Gradients are written by the
// layer backward passes and consumed by the optimizer; master values are
// only ever changed by the optimizer.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

enum class LayerType {
  Conv2d,
  Linear,
  BatchNorm,
  ReLU,
  MaxPool,
  GlobalAvgPool,
  ResidualAdd,
};

struct LayerSpec {
  LayerType type = LayerType::ReLU;
  int64_t c_out = 0;   // Conv2d / Linear output size
  int64_t k = 0;       // Conv2d / MaxPool kernel extent
  int64_t stride = 1;  // Conv2d / MaxPool
  int64_t pad = 0;     // Conv2d
  int64_t groups = 1;  // Conv2d
  bool bias = true;    // Conv2d / Linear
  int64_t source = -1; // ResidualAdd: index of the layer whose output is added
};

// Saved forward state a layer needs for its backward pass. One tape entry
// per layer per forward; backward consumes it once.
struct LayerCtx {
  virtual ~LayerCtx() = default;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerType type() const = 0;
  virtual const char* kind() const = 0;
  bool has_weights() const {
    return type() == LayerType::Conv2d || type() == LayerType::Linear;
  }

  /// weights_override substitutes for the master weight tensor (the model
  /// passes the quantized image through here); layers without weights
  /// ignore it. ctx is filled with whatever backward will need.
  virtual Tensor forward(const Tensor& x, Mode mode,
                         const Tensor* weights_override,
                         std::unique_ptr<LayerCtx>& ctx) = 0;

  /// Two-input forward; only ResidualAdd implements it.
  virtual Tensor forward2(const Tensor& x, const Tensor& skip,
                          std::unique_ptr<LayerCtx>& ctx);

  /// gy is the gradient w.r.t. this layer's output. Accumulates parameter
  /// gradients into the Param::grad slots and returns the gradient w.r.t.
  /// the input (empty tensor when want_gx is false).
  virtual Tensor backward(const Tensor& gy, const LayerCtx& ctx,
                          bool want_gx) = 0;

  virtual std::vector<Param*> params() { return {}; }
  /// Non-trained state that still belongs in checkpoints (BN running stats).
  virtual std::vector<Param*> buffers() { return {}; }
  virtual Param* weight_param() { return nullptr; }
  /// ResidualAdd: index of the skip source layer; -1 otherwise.
  virtual int64_t residual_source() const { return -1; }

  /// Output shape for a given input shape (batch dim included); throws on
  /// incompatible input. Used to validate the graph at build time.
  virtual std::vector<int64_t> out_shape(
      const std::vector<int64_t>& in) const = 0;
};

/// Builds one layer from its spec. in_shape carries the input including a
/// batch dim. index names the parameters ("layer3.weight"). rng drives
/// weight initialization.
std::unique_ptr<Layer> make_layer(const LayerSpec& spec,
                                  const std::vector<int64_t>& in_shape,
                                  int64_t index, RandomSource& rng);

}  // namespace qsim
