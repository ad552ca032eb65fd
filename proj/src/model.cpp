#include "qsim/model.hpp"

#include <algorithm>

#include "qsim/error.hpp"

namespace qsim {
namespace {

Tensor elementwise_add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("gradient add: shape mismatch, " + a.shape_str() +
                     " vs " + b.shape_str());
  }
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) {
    out[i] = a[i] + b[i];
  }
  return out;
}

Tensor elementwise_mul(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) {
    out[i] = a[i] * b[i];
  }
  return out;
}

// 1 where x lies inside the grid's representable range, else 0. This is the
// straight-through estimator's clip mask.
Tensor range_mask(const Tensor& x, const QuantGrid& g) {
  const double lo = g.lo();
  const double hi = g.hi();
  Tensor m(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double v = static_cast<double>(x[i]);
    m[i] = (v >= lo && v <= hi) ? 1.0f : 0.0f;
  }
  return m;
}

}  // namespace

QuantSpec default_quant_spec() {
  QuantSpec q;
  q.weights.enabled = true;
  q.weights.bits = 8;
  q.weights.rounding = Rounding::Nearest;
  q.weights.estimator = {EstimatorKind::CurrentMinMax, 0.9, 100, 8};
  q.activations.enabled = true;
  q.activations.bits = 8;
  q.activations.rounding = Rounding::Nearest;
  q.activations.estimator = {EstimatorKind::InHindsightMinMax, 0.9, 100, 8};
  q.gradients.enabled = true;
  q.gradients.bits = 8;
  q.gradients.rounding = Rounding::Stochastic;
  q.gradients.estimator = {EstimatorKind::InHindsightMinMax, 0.9, 100, 8};
  q.quantize_first_last = true;
  return q;
}

ModelConfig default_model(const std::vector<int64_t>& input_shape,
                          int64_t classes) {
  ModelConfig mc;
  mc.input_shape = input_shape;
  if (input_shape.size() == 3) {
    LayerSpec conv1{LayerType::Conv2d, 8, 3, 1, 1, 1, true, -1};
    LayerSpec conv2{LayerType::Conv2d, 16, 3, 1, 1, 1, true, -1};
    LayerSpec pool{LayerType::MaxPool, 0, 2, 2, 0, 1, true, -1};
    mc.layers = {conv1,
                 {LayerType::BatchNorm},
                 {LayerType::ReLU},
                 pool,
                 conv2,
                 {LayerType::BatchNorm},
                 {LayerType::ReLU},
                 {LayerType::GlobalAvgPool},
                 {LayerType::Linear, classes, 0, 1, 0, 1, true, -1}};
  } else if (input_shape.size() == 1) {
    mc.layers = {{LayerType::Linear, 32, 0, 1, 0, 1, true, -1},
                 {LayerType::ReLU},
                 {LayerType::Linear, classes, 0, 1, 0, 1, true, -1}};
  } else {
    throw ConfigError("default model: input must be [C,H,W] or [features]");
  }
  return mc;
}

Model::Model(const ModelConfig& mc, const QuantSpec& qs,
             RandomSource& init_rng)
    : cfg_(mc), qspec_(qs), input_shape_(mc.input_shape) {
  if (mc.layers.empty()) {
    throw ConfigError("model: needs at least one layer");
  }
  std::vector<int64_t> shape;
  shape.push_back(1);
  shape.insert(shape.end(), input_shape_.begin(), input_shape_.end());

  std::vector<std::vector<int64_t>> out_shapes;
  for (size_t i = 0; i < mc.layers.size(); ++i) {
    const LayerSpec& spec = mc.layers[i];
    if (spec.type == LayerType::ResidualAdd) {
      if (spec.source < 0 || spec.source >= static_cast<int64_t>(i)) {
        throw ConfigError("residual_add at layer " + std::to_string(i) +
                          ": source must name an earlier layer");
      }
      if (out_shapes[static_cast<size_t>(spec.source)] != shape) {
        throw ShapeError("residual_add at layer " + std::to_string(i) +
                         ": source shape differs from input shape");
      }
    }
    layers_.push_back(
        make_layer(spec, shape, static_cast<int64_t>(i), init_rng));
    shape = layers_.back()->out_shape(shape);
    out_shapes.push_back(shape);
    if (layers_.back()->has_weights()) {
      weight_layers_.push_back(static_cast<int64_t>(i));
    }
  }

  tapped_.assign(layers_.size(), false);
  for (size_t i = 0; i < mc.layers.size(); ++i) {
    if (mc.layers[i].type == LayerType::ResidualAdd) {
      tapped_[static_cast<size_t>(mc.layers[i].source)] = true;
    }
  }

  const int64_t first_w = weight_layers_.empty() ? -1 : weight_layers_.front();
  const int64_t last_w = weight_layers_.empty() ? -1 : weight_layers_.back();
  const int64_t n = static_cast<int64_t>(layers_.size());
  for (int64_t wi : weight_layers_) {
    if (!qspec_.quantize_first_last && (wi == first_w || wi == last_w)) {
      continue;
    }
    if (qspec_.weights.enabled) {
      wsites_.emplace(wi, Site(qspec_.weights));
    }
    if (qspec_.activations.enabled) {
      // The activation quantizer sits after the whole block: the weight
      // layer plus any BatchNorm/ReLU directly following it.
      int64_t j = wi;
      while (j + 1 < n && (layers_[static_cast<size_t>(j + 1)]->type() ==
                               LayerType::BatchNorm ||
                           layers_[static_cast<size_t>(j + 1)]->type() ==
                               LayerType::ReLU)) {
        ++j;
      }
      asites_.emplace(j, Site(qspec_.activations));
    }
    // No gradient crosses the boundary below the network's entry layer, so
    // layer 0 carries no gradient quantizer.
    if (qspec_.gradients.enabled && wi > 0) {
      gsites_.emplace(wi, Site(qspec_.gradients));
    }
  }
}

std::vector<int64_t> Model::activation_site_layers() const {
  std::vector<int64_t> v;
  for (const auto& [k, s] : asites_) {
    v.push_back(k);
  }
  return v;
}

std::vector<int64_t> Model::gradient_site_layers() const {
  std::vector<int64_t> v;
  for (const auto& [k, s] : gsites_) {
    v.push_back(k);
  }
  return v;
}

void Model::record(int64_t layer, const char* role, const QuantRange& r,
                   int64_t clipped, int64_t total) {
  SiteTelemetry t;
  t.layer = layer;
  t.role = role;
  t.q_min = r.q_min;
  t.q_max = r.q_max;
  t.saturation = static_cast<double>(clipped) / static_cast<double>(total);
  telemetry_.push_back(std::move(t));
}

void Model::quantize_weights(int64_t li, Mode mode, RandomSource* rng,
                             Tape* tape, Tensor& out) {
  Site& s = wsites_.at(li);
  Layer& layer = *layers_[static_cast<size_t>(li)];
  const Tensor& w = layer.weight_param()->value;
  const QuantRange r =
      mode == Mode::Eval ? s.est.eval_range(w) : s.est.range_for_step(w);
  const Rounding rounding =
      mode == Mode::Eval ? Rounding::Nearest : s.cfg.rounding;
  const QuantGrid grid = make_grid(r, s.cfg.bits, rounding);
  RandomSource* draw = rounding == Rounding::Stochastic ? rng : nullptr;
  QuantizeResult res = fake_quantize_counted(w, grid, draw);
  if (mode == Mode::Train && tape != nullptr) {
    tape->w_mask[static_cast<size_t>(li)] = range_mask(w, grid);
  }
  record(li, "weight", r, res.clipped, w.numel());
  out = std::move(res.values);
}

Tensor Model::forward_quantized(const Tensor& x, Mode mode, Tape& tape,
                                RandomSource* rng) {
  if (x.rank() != static_cast<int64_t>(input_shape_.size()) + 1) {
    throw ShapeError("forward: expected batch of " +
                     shape_to_string(input_shape_) + " inputs, got " +
                     x.shape_str());
  }
  for (size_t i = 0; i < input_shape_.size(); ++i) {
    if (x.extent(static_cast<int64_t>(i) + 1) != input_shape_[i]) {
      throw ShapeError("forward: expected batch of " +
                       shape_to_string(input_shape_) + " inputs, got " +
                       x.shape_str());
    }
  }

  const size_t n = layers_.size();
  tape.mode = mode;
  tape.consumed = false;
  tape.ctxs.clear();
  tape.ctxs.resize(n);
  tape.y_mask.assign(n, Tensor());
  tape.w_mask.assign(n, Tensor());
  telemetry_.clear();

  std::vector<Tensor> outs(n);
  Tensor cur = x;
  for (size_t i = 0; i < n; ++i) {
    Layer& layer = *layers_[i];
    const int64_t li = static_cast<int64_t>(i);

    Tensor wq;
    const Tensor* wov = nullptr;
    if (layer.has_weights() && wsites_.count(li) > 0) {
      quantize_weights(li, mode, rng, &tape, wq);
      wov = &wq;
    }

    if (layer.type() == LayerType::ResidualAdd) {
      cur = layer.forward2(cur, outs[static_cast<size_t>(
                                    layer.residual_source())],
                           tape.ctxs[i]);
    } else {
      cur = layer.forward(cur, mode, wov, tape.ctxs[i]);
    }

    auto it = asites_.find(li);
    if (it != asites_.end()) {
      Site& s = it->second;
      const QuantRange r = mode == Mode::Eval ? s.est.eval_range(cur)
                                              : s.est.range_for_step(cur);
      const Rounding rounding =
          mode == Mode::Eval ? Rounding::Nearest : s.cfg.rounding;
      const QuantGrid grid = make_grid(r, s.cfg.bits, rounding);
      RandomSource* draw = rounding == Rounding::Stochastic ? rng : nullptr;
      QuantizeResult res = fake_quantize_counted(cur, grid, draw);
      if (mode == Mode::Train) {
        tape.y_mask[i] = range_mask(cur, grid);
      }
      record(li, "activation", r, res.clipped, cur.numel());
      cur = std::move(res.values);
    }

    if (tapped_[i]) {
      outs[i] = cur;
    }
  }
  return cur;
}

void Model::backward_quantized(Tape& tape, const Tensor& loss_grad,
                               RandomSource* rng) {
  if (tape.consumed) {
    throw StateError("backward: tape already consumed");
  }
  if (tape.mode != Mode::Train) {
    throw StateError("backward: needs a Train-mode tape");
  }
  if (tape.ctxs.size() != layers_.size()) {
    throw StateError("backward: tape does not match this model");
  }
  tape.consumed = true;

  for (Param* p : params()) {
    std::fill(p->grad.data(), p->grad.data() + p->grad.numel(), 0.0f);
  }

  const size_t n = layers_.size();
  std::vector<Tensor> pending(n);  // residual-tap gradients by source layer
  Tensor g = loss_grad;
  for (size_t ri = n; ri-- > 0;) {
    const int64_t li = static_cast<int64_t>(ri);
    Layer& layer = *layers_[ri];

    if (pending[ri].numel() > 0) {
      g = elementwise_add(g, pending[ri]);
    }
    if (tape.y_mask[ri].numel() > 0) {
      g = elementwise_mul(g, tape.y_mask[ri]);
    }

    const bool want_gx = ri > 0;
    Tensor gx;
    if (layer.type() == LayerType::ResidualAdd) {
      const size_t src = static_cast<size_t>(layer.residual_source());
      pending[src] = pending[src].numel() > 0 ? elementwise_add(pending[src], g)
                                              : g;
      gx = want_gx ? g : Tensor();
    } else {
      if (!tape.ctxs[ri]) {
        throw StateError("backward: missing tape entry for layer " +
                         std::to_string(ri));
      }
      gx = layer.backward(g, *tape.ctxs[ri], want_gx);
      if (layer.has_weights()) {
        if (tape.w_mask[ri].numel() > 0) {
          Param* w = layer.weight_param();
          for (int64_t j = 0; j < w->grad.numel(); ++j) {
            w->grad[j] *= tape.w_mask[ri][j];
          }
        }
        auto it = gsites_.find(li);
        if (want_gx && it != gsites_.end()) {
          Site& s = it->second;
          const QuantRange r = s.est.range_for_step(gx);
          const QuantGrid grid = make_grid(r, s.cfg.bits, s.cfg.rounding);
          RandomSource* draw =
              s.cfg.rounding == Rounding::Stochastic ? rng : nullptr;
          QuantizeResult res = fake_quantize_counted(gx, grid, draw);
          record(li, "gradient", r, res.clipped, gx.numel());
          gx = std::move(res.values);
        }
      }
    }
    g = std::move(gx);
  }
}

std::vector<Param*> Model::params() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    for (Param* p : l->params()) {
      out.push_back(p);
    }
  }
  return out;
}

std::vector<Param*> Model::state_tensors() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    for (Param* p : l->params()) {
      out.push_back(p);
    }
    for (Param* p : l->buffers()) {
      out.push_back(p);
    }
  }
  return out;
}

int64_t Model::num_params() {
  int64_t n = 0;
  for (Param* p : params()) {
    n += p->value.numel();
  }
  return n;
}

void Model::reset_estimator_steps() {
  for (auto& [k, s] : wsites_) {
    s.est.reset_step();
  }
  for (auto& [k, s] : asites_) {
    s.est.reset_step();
  }
  for (auto& [k, s] : gsites_) {
    s.est.reset_step();
  }
}

std::vector<int64_t> Model::site_step_counters() const {
  std::vector<int64_t> v;
  for (const auto& [k, s] : wsites_) {
    v.push_back(s.est.step());
  }
  for (const auto& [k, s] : asites_) {
    v.push_back(s.est.step());
  }
  for (const auto& [k, s] : gsites_) {
    v.push_back(s.est.step());
  }
  return v;
}

}  // namespace qsim
