#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qsim {

// Memory-movement accounting for one conv layer on a fixed-point
// accelerator, comparing static quantization (ranges known up front, the
// accumulator output is quantized as it streams out) against dynamic
// quantization (the full-precision accumulator tensor is written to memory,
// read back to find its range, and written again quantized).

struct LayerGeom {
  int64_t c_in = 1;
  int64_t c_out = 1;
  int64_t k = 1;  // square kernel extent
  int64_t w = 1;  // output feature-map width
  int64_t h = 1;  // output feature-map height
  bool depthwise = false;
};

struct BitWidths {
  int b_w = 8;    // weight bits
  int b_a = 8;    // activation bits
  int b_acc = 32; // accumulator bits
};

struct CostReport {
  int64_t static_bits = 0;
  int64_t dynamic_bits = 0;
  double static_kib = 0.0;
  double dynamic_kib = 0.0;
  double delta_pct = 0.0;  // 100 * (dynamic - static) / static, unrounded
};

/// Weights + load input + store quantized output.
int64_t static_cost_bits(const LayerGeom& g, const BitWidths& b);

/// Adds the accumulator round-trip: store wide output, load it back for
/// range computation, store the quantized result.
int64_t dynamic_cost_bits(const LayerGeom& g, const BitWidths& b);

CostReport cost_report(const LayerGeom& g, const BitWidths& b);

/// Half-up integer rounding used for table display (1373.5 KiB prints 1374).
int64_t display_round(double v);

struct NamedLayer {
  std::string name;
  LayerGeom geom;
};

struct NetworkCost {
  std::vector<CostReport> per_layer;
  CostReport total;
};

NetworkCost network_cost(const std::vector<NamedLayer>& layers,
                         const BitWidths& b);

}  // namespace qsim
