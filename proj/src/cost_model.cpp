#include "qsim/cost_model.hpp"

#include <cmath>

#include "qsim/error.hpp"

namespace qsim {
namespace {

void validate(const LayerGeom& g, const BitWidths& b) {
  if (g.c_in <= 0 || g.c_out <= 0 || g.k <= 0 || g.w <= 0 || g.h <= 0) {
    throw GeometryError("cost model: all geometry fields must be positive");
  }
  if (g.depthwise && g.c_in != g.c_out) {
    throw GeometryError("cost model: depthwise layer needs c_in == c_out");
  }
  if (b.b_w < 1 || b.b_w > 64 || b.b_a < 1 || b.b_a > 64 || b.b_acc < 1 ||
      b.b_acc > 64) {
    throw ValueError("cost model: bit-widths must be in [1, 64]");
  }
  if (b.b_acc < b.b_a) {
    throw ValueError("cost model: accumulator must be at least as wide as "
                     "activations");
  }
}

int64_t weight_bits(const LayerGeom& g, const BitWidths& b) {
  // Depthwise kernels have one input channel per filter, so c_in folds away.
  const int64_t filters = g.depthwise ? g.c_out : g.c_in * g.c_out;
  return filters * g.k * g.k * b.b_w;
}

}  // namespace

int64_t static_cost_bits(const LayerGeom& g, const BitWidths& b) {
  validate(g, b);
  return weight_bits(g, b) + g.c_in * g.w * g.h * b.b_a +
         g.c_out * g.w * g.h * b.b_a;
}

int64_t dynamic_cost_bits(const LayerGeom& g, const BitWidths& b) {
  validate(g, b);
  return weight_bits(g, b) + g.c_in * g.w * g.h * b.b_a +
         2 * g.c_out * g.w * g.h * b.b_acc + g.c_out * g.w * g.h * b.b_a;
}

int64_t display_round(double v) {
  return static_cast<int64_t>(std::floor(v + 0.5));
}

CostReport cost_report(const LayerGeom& g, const BitWidths& b) {
  CostReport r;
  r.static_bits = static_cost_bits(g, b);
  r.dynamic_bits = dynamic_cost_bits(g, b);
  r.static_kib = static_cast<double>(r.static_bits) / 8.0 / 1024.0;
  r.dynamic_kib = static_cast<double>(r.dynamic_bits) / 8.0 / 1024.0;
  r.delta_pct = 100.0 *
                static_cast<double>(r.dynamic_bits - r.static_bits) /
                static_cast<double>(r.static_bits);
  return r;
}

NetworkCost network_cost(const std::vector<NamedLayer>& layers,
                         const BitWidths& b) {
  if (layers.empty()) {
    throw ValueError("network_cost: empty layer list");
  }
  NetworkCost n;
  int64_t s = 0;
  int64_t d = 0;
  for (const auto& l : layers) {
    n.per_layer.push_back(cost_report(l.geom, b));
    s += n.per_layer.back().static_bits;
    d += n.per_layer.back().dynamic_bits;
  }
  n.total.static_bits = s;
  n.total.dynamic_bits = d;
  n.total.static_kib = static_cast<double>(s) / 8.0 / 1024.0;
  n.total.dynamic_kib = static_cast<double>(d) / 8.0 / 1024.0;
  n.total.delta_pct =
      100.0 * static_cast<double>(d - s) / static_cast<double>(s);
  return n;
}

}  // namespace qsim
