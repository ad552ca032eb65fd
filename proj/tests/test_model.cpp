// Model wrapper behavior: where quantizer sites land, transparency when all
// sites are off, master-weight hygiene, step bookkeeping, determinism, and
// small end-to-end training runs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <numeric>
#include <vector>

#include "doctest.h"

#include "qsim/dataset.hpp"
#include "qsim/layers.hpp"
#include "qsim/loss.hpp"
#include "qsim/model.hpp"
#include "qsim/optimizer.hpp"
#include "qsim/quantizer.hpp"
#include "qsim/random.hpp"
#include "qsim/tensor.hpp"

namespace {

using namespace qsim;

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data(), b.data(), sizeof(float) * a.numel()) == 0;
}

std::vector<int64_t> telemetry_layers(const Model& m, const char* role) {
  std::vector<int64_t> v;
  for (const auto& t : m.site_telemetry()) {
    if (t.role == role) v.push_back(t.layer);
  }
  std::sort(v.begin(), v.end());
  return v;
}

Tensor random_input(const std::vector<int64_t>& shape, RandomSource& rng) {
  Tensor x(shape);
  for (int64_t i = 0; i < x.numel(); ++i)
    x[i] = static_cast<float>(rng.normal());
  return x;
}

// One train step: forward, cross-entropy, backward, SGD update.
double train_step(Model& m, SgdOptimizer& opt, const Tensor& x,
                  const std::vector<int64_t>& labels, double lr,
                  RandomSource& rng) {
  Tape tape;
  Tensor logits = m.forward_quantized(x, Mode::Train, tape, &rng);
  auto res = softmax_cross_entropy(logits, labels);
  m.backward_quantized(tape, res.grad, &rng);
  opt.step(lr);
  return res.loss;
}

// Accuracy under Eval mode over the whole dataset in one batch.
double eval_accuracy(Model& m, const Dataset& d) {
  Tape tape;
  std::vector<int64_t> all(d.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<int64_t> labels;
  Tensor x = gather_batch(d, all, &labels);
  Tensor logits = m.forward_quantized(x, Mode::Eval, tape);
  auto res = softmax_cross_entropy(logits, labels);
  return static_cast<double>(res.correct) / static_cast<double>(d.size());
}

}  // namespace

TEST_CASE("default training protocol: W8/A8/G8") {
  const QuantSpec q = default_quant_spec();
  CHECK(q.weights.enabled);
  CHECK(q.weights.bits == 8);
  CHECK(q.weights.rounding == Rounding::Nearest);
  CHECK(q.weights.estimator.kind == EstimatorKind::CurrentMinMax);
  CHECK(q.activations.enabled);
  CHECK(q.activations.bits == 8);
  CHECK(q.activations.rounding == Rounding::Nearest);
  CHECK(q.activations.estimator.kind == EstimatorKind::InHindsightMinMax);
  CHECK(q.activations.estimator.momentum == doctest::Approx(0.9));
  CHECK(q.gradients.enabled);
  CHECK(q.gradients.bits == 8);
  CHECK(q.gradients.rounding == Rounding::Stochastic);
  CHECK(q.gradients.estimator.kind == EstimatorKind::InHindsightMinMax);
  CHECK(q.quantize_first_last);
}

TEST_CASE("site placement on the default image network") {
  RandomSource rng(5);
  Model m(default_model({1, 8, 8}, 10), default_quant_spec(), rng);

  // Layers: conv0 bn1 relu2 pool3 conv4 bn5 relu6 gap7 linear8.
  CHECK(m.weight_layers() == std::vector<int64_t>{0, 4, 8});
  // Activation quantizers sit at the end of each conv/linear block, past
  // the BN and ReLU that follow it.
  CHECK(m.activation_site_layers() == std::vector<int64_t>{2, 6, 8});
  // The bottom layer has no incoming-gradient consumer below it.
  CHECK(m.gradient_site_layers() == std::vector<int64_t>{4, 8});

  RandomSource data_rng(6);
  Tensor x = random_input({2, 1, 8, 8}, data_rng);
  Tape tape;
  Tensor logits = m.forward_quantized(x, Mode::Train, tape, &data_rng);
  auto res = softmax_cross_entropy(logits, {1, 3});
  m.backward_quantized(tape, res.grad, &data_rng);

  CHECK(telemetry_layers(m, "weight") == std::vector<int64_t>{0, 4, 8});
  CHECK(telemetry_layers(m, "activation") == std::vector<int64_t>{2, 6, 8});
  CHECK(telemetry_layers(m, "gradient") == std::vector<int64_t>{4, 8});
}

TEST_CASE("quantize_first_last=false exempts the boundary layers") {
  QuantSpec qs = default_quant_spec();
  qs.quantize_first_last = false;
  RandomSource rng(5);
  Model m(default_model({1, 8, 8}, 10), qs, rng);

  CHECK(m.weight_layers() == std::vector<int64_t>{0, 4, 8});
  CHECK(m.activation_site_layers() == std::vector<int64_t>{6});
  CHECK(m.gradient_site_layers() == std::vector<int64_t>{4});

  RandomSource data_rng(6);
  Tensor x = random_input({2, 1, 8, 8}, data_rng);
  Tape tape;
  Tensor logits = m.forward_quantized(x, Mode::Train, tape, &data_rng);
  auto res = softmax_cross_entropy(logits, {1, 3});
  m.backward_quantized(tape, res.grad, &data_rng);

  CHECK(telemetry_layers(m, "weight") == std::vector<int64_t>{4});
  CHECK(telemetry_layers(m, "activation") == std::vector<int64_t>{6});
  CHECK(telemetry_layers(m, "gradient") == std::vector<int64_t>{4});
}

TEST_CASE("site placement on the flat-input MLP") {
  RandomSource rng(5);
  Model m(default_model({4}, 3), default_quant_spec(), rng);
  CHECK(m.weight_layers() == std::vector<int64_t>{0, 2});
  CHECK(m.activation_site_layers() == std::vector<int64_t>{1, 2});
  CHECK(m.gradient_site_layers() == std::vector<int64_t>{2});
}

TEST_CASE("all sites disabled: the wrapper is bitwise transparent") {
  ModelConfig mc;
  mc.input_shape = {1, 6, 6};
  mc.layers = {
      LayerSpec{.type = LayerType::Conv2d, .c_out = 2, .k = 3, .pad = 1},
      LayerSpec{.type = LayerType::BatchNorm},
      LayerSpec{.type = LayerType::ReLU},
      LayerSpec{.type = LayerType::MaxPool, .k = 2, .stride = 2},
      LayerSpec{.type = LayerType::GlobalAvgPool},
      LayerSpec{.type = LayerType::Linear, .c_out = 3},
  };

  RandomSource rng_model(42);
  Model m(mc, QuantSpec{}, rng_model);

  // Twin stack built with the same seed sees the same init draws.
  RandomSource rng_twin(42);
  std::vector<std::unique_ptr<Layer>> twin;
  std::vector<int64_t> shape = {1, 1, 6, 6};
  for (size_t i = 0; i < mc.layers.size(); ++i) {
    twin.push_back(make_layer(mc.layers[i], shape,
                              static_cast<int64_t>(i), rng_twin));
    shape = twin.back()->out_shape(shape);
  }

  RandomSource data_rng(7);
  Tensor x = random_input({2, 1, 6, 6}, data_rng);
  const std::vector<int64_t> labels = {0, 2};

  Tape tape;
  Tensor logits = m.forward_quantized(x, Mode::Train, tape);
  auto res = softmax_cross_entropy(logits, labels);
  m.backward_quantized(tape, res.grad);

  std::vector<std::unique_ptr<LayerCtx>> ctxs(twin.size());
  Tensor cur = x;
  for (size_t i = 0; i < twin.size(); ++i) {
    cur = twin[i]->forward(cur, Mode::Train, nullptr, ctxs[i]);
  }
  CHECK(same_bits(logits, cur));

  auto twin_res = softmax_cross_entropy(cur, labels);
  Tensor g = twin_res.grad;
  for (size_t i = twin.size(); i-- > 0;) {
    g = twin[i]->backward(g, *ctxs[i], i > 0);
  }

  auto mp = m.params();
  std::vector<Param*> tp;
  for (auto& l : twin) {
    for (Param* p : l->params()) tp.push_back(p);
  }
  REQUIRE(mp.size() == tp.size());
  for (size_t i = 0; i < mp.size(); ++i) {
    CHECK(same_bits(mp[i]->value, tp[i]->value));
    CHECK(same_bits(mp[i]->grad, tp[i]->grad));
  }

  // The optimizer path must agree too.
  OptimizerConfig oc;
  oc.lr = 0.05;
  SgdOptimizer opt_m(oc, mp);
  SgdOptimizer opt_t(oc, tp);
  opt_m.step(0.05);
  opt_t.step(0.05);
  for (size_t i = 0; i < mp.size(); ++i) {
    CHECK(same_bits(mp[i]->value, tp[i]->value));
  }
  CHECK(m.site_telemetry().empty());
}

TEST_CASE("weight quantization: masters stay pure, images derive from them") {
  ModelConfig mc;
  mc.input_shape = {4};
  mc.layers = {
      LayerSpec{.type = LayerType::Linear, .c_out = 6},
      LayerSpec{.type = LayerType::ReLU},
      LayerSpec{.type = LayerType::Linear, .c_out = 3},
  };
  QuantSpec qs;  // only weights quantize
  qs.weights.enabled = true;
  qs.weights.bits = 8;
  qs.weights.rounding = Rounding::Nearest;
  qs.weights.estimator = {EstimatorKind::CurrentMinMax, 0.9, 100, 8};

  RandomSource rng_model(21);
  Model m(mc, qs, rng_model);
  RandomSource rng_twin(21);
  std::vector<std::unique_ptr<Layer>> twin;
  std::vector<int64_t> shape = {1, 4};
  for (size_t i = 0; i < mc.layers.size(); ++i) {
    twin.push_back(make_layer(mc.layers[i], shape,
                              static_cast<int64_t>(i), rng_twin));
    shape = twin.back()->out_shape(shape);
  }

  auto quantized_image = [](const Tensor& w) {
    const auto [lo, hi] = reduce_min_max(w);
    return fake_quantize(w, make_grid({lo, hi}, 8, Rounding::Nearest));
  };
  auto twin_forward = [&](const Tensor& x) {
    std::vector<std::unique_ptr<LayerCtx>> ctxs(twin.size());
    Tensor cur = x;
    for (size_t i = 0; i < twin.size(); ++i) {
      if (twin[i]->has_weights()) {
        Tensor qw = quantized_image(twin[i]->weight_param()->value);
        cur = twin[i]->forward(cur, Mode::Train, &qw, ctxs[i]);
      } else {
        cur = twin[i]->forward(cur, Mode::Train, nullptr, ctxs[i]);
      }
    }
    return cur;
  };

  RandomSource data_rng(9);
  Tensor x = random_input({5, 4}, data_rng);
  const std::vector<int64_t> labels = {0, 1, 2, 0, 1};

  auto mp = m.params();
  std::vector<Tensor> masters_before;
  for (auto* p : mp) masters_before.push_back(p->value);

  Tape tape;
  Tensor logits = m.forward_quantized(x, Mode::Train, tape);
  CHECK(same_bits(logits, twin_forward(x)));

  auto res = softmax_cross_entropy(logits, labels);
  m.backward_quantized(tape, res.grad);
  for (size_t i = 0; i < mp.size(); ++i) {
    CHECK(same_bits(mp[i]->value, masters_before[i]));
  }

  // The update lands on the masters, and the next quantized image is a pure
  // function of the new master values.
  SgdOptimizer opt(OptimizerConfig{}, mp);
  opt.step(0.05);
  bool moved = false;
  for (size_t i = 0; i < mp.size(); ++i) {
    if (!same_bits(mp[i]->value, masters_before[i])) moved = true;
    // Keep the twin in lockstep by copying the updated masters across.
  }
  CHECK(moved);
  std::vector<Param*> tp;
  for (auto& l : twin) {
    for (Param* p : l->params()) tp.push_back(p);
  }
  for (size_t i = 0; i < mp.size(); ++i) {
    tp[i]->value = mp[i]->value;
  }
  Tape tape2;
  Tensor logits2 = m.forward_quantized(x, Mode::Eval, tape2);
  CHECK(same_bits(logits2, twin_forward(x)));
}

TEST_CASE("estimator step counters follow calibration and training") {
  RandomSource rng(3);
  Model m(default_model({1, 8, 8}, 4), default_quant_spec(), rng);
  RandomSource data_rng(4);
  SgdOptimizer opt(OptimizerConfig{}, m.params());

  for (int b = 0; b < 2; ++b) {
    Tape tape;
    Tensor x = random_input({2, 1, 8, 8}, data_rng);
    m.forward_quantized(x, Mode::Calibrate, tape, &data_rng);
  }
  // Calibration is forward-only: weight and activation estimators advance,
  // gradient estimators see nothing until the first backward pass.
  {
    const auto counters = m.site_step_counters();
    REQUIRE(counters.size() == 8);
    for (size_t i = 0; i < 6; ++i) CHECK(counters[i] == 2);
    for (size_t i = 6; i < 8; ++i) CHECK(counters[i] == 0);
  }

  m.reset_estimator_steps();
  for (int64_t c : m.site_step_counters()) CHECK(c == 0);

  const int64_t steps = 3;
  for (int64_t s = 0; s < steps; ++s) {
    Tensor x = random_input({2, 1, 8, 8}, data_rng);
    train_step(m, opt, x, {0, 1}, 0.01, data_rng);
  }
  auto counters = m.site_step_counters();
  CHECK(counters.size() == 8);  // 3 weight + 3 activation + 2 gradient sites
  for (int64_t c : counters) CHECK(c == steps);
}

TEST_CASE("same seed and stream give bitwise identical training") {
  auto run = [] {
    RandomSource rng(77);
    Model m(default_model({2}, 3), default_quant_spec(), rng);
    SgdOptimizer opt(OptimizerConfig{}, m.params());
    RandomSource data_rng(78);
    BlobsConfig bc;
    bc.classes = 3;
    bc.dim = 2;
    bc.samples = 64;
    Dataset d = synth_blobs(bc, data_rng);
    std::vector<int64_t> idx(16);
    for (int64_t s = 0; s < 10; ++s) {
      for (size_t j = 0; j < idx.size(); ++j)
        idx[j] = (s * 16 + static_cast<int64_t>(j)) % d.size();
      std::vector<int64_t> labels;
      Tensor x = gather_batch(d, idx, &labels);
      train_step(m, opt, x, labels, 0.05, data_rng);
    }
    std::vector<Tensor> out;
    for (auto* p : m.params()) out.push_back(p->value);
    return out;
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(same_bits(a[i], b[i]));
  }
}

TEST_CASE("blobs: quantized training tracks the FP32 reference") {
  RandomSource data_rng(15);
  BlobsConfig bc;
  bc.classes = 3;
  bc.dim = 2;
  bc.samples = 256;
  bc.noise_sigma = 0.1;
  Dataset d = synth_blobs(bc, data_rng);

  auto train = [&](const QuantSpec& qs) {
    RandomSource rng(100);
    Model m(default_model({2}, 3), qs, rng);
    OptimizerConfig oc;
    oc.lr = 0.05;
    SgdOptimizer opt(oc, m.params());
    RandomSource step_rng(101);
    std::vector<int64_t> order(d.size());
    std::iota(order.begin(), order.end(), 0);
    const int64_t bs = 32;
    int64_t step = 0;
    while (step < 200) {
      step_rng.shuffle(order);
      for (int64_t at = 0; at + bs <= d.size() && step < 200; at += bs) {
        std::vector<int64_t> idx(order.begin() + at, order.begin() + at + bs);
        std::vector<int64_t> labels;
        Tensor x = gather_batch(d, idx, &labels);
        train_step(m, opt, x, labels, 0.05, step_rng);
        ++step;
      }
    }
    return eval_accuracy(m, d);
  };

  const double acc_fp32 = train(QuantSpec{});
  CHECK(acc_fp32 >= 0.95);
  const double acc_q = train(default_quant_spec());
  CHECK(std::abs(acc_q - acc_fp32) <= 0.05);
}
