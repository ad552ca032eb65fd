// Release gate: runs every acceptance criterion and prints one PASS/FAIL
// line per criterion. Exits nonzero if any criterion fails.
//
// Usage: qsim_acceptance <path-to-qsim-cli> <data-dir>
//
// The CLI path is exercised directly for the cost-table and determinism
// criteria; everything else goes through the library.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qsim/config.hpp"
#include "qsim/cost_model.hpp"
#include "qsim/dataset.hpp"
#include "qsim/error.hpp"
#include "qsim/estimators.hpp"
#include "qsim/metrics.hpp"
#include "qsim/model.hpp"
#include "qsim/quantizer.hpp"
#include "qsim/random.hpp"
#include "qsim/tensor.hpp"
#include "qsim/trainer.hpp"
#include "support/reference_net.hpp"

namespace {

using namespace qsim;

std::string g_cli;
std::string g_data;
std::filesystem::path g_tmp;

std::string shq(const std::string& s) { return "'" + s + "'"; }

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
}

Tensor normal_tensor(int64_t n, RandomSource& rng, float scale = 1.0f) {
  Tensor t({n});
  for (int64_t i = 0; i < n; ++i)
    t[i] = scale * static_cast<float>(rng.normal());
  return t;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return std::string(buf);
}

// ---------------------------------------------------------------- criterion 1

bool check_cost_table(std::string& detail) {
  const std::string csv = (g_tmp / "table_rows.csv").string();
  const std::string cmd = shq(g_cli) + " cost-table --network " +
                          shq(g_data + "/networks/reference_layers.json") +
                          " --format csv > " + shq(csv) + " 2>/dev/null";
  if (std::system(cmd.c_str()) != 0) {
    detail = "cost-table invocation failed";
    return false;
  }

  struct Row {
    long long s = -1, d = -1, pct = -1;
  };
  std::map<std::string, Row> rows;
  for (const std::string& line : read_lines(csv)) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() != 12 || cols[0] == "name") continue;
    Row r;
    r.s = std::atoll(cols[9].c_str());
    r.d = std::atoll(cols[10].c_str());
    r.pct = std::atoll(cols[11].c_str());
    rows[cols[0]] = r;
  }

  struct Want {
    const char* name;
    long long s, d, pct;
  };
  // mobilenetv2_dw96_112 is bundled but not checked: its circulating
  // reference values match a 144-channel 56x56 depthwise layer, not the
  // geometry listed, so there is nothing trustworthy to pin it to.
  const Want wants[] = {
      {"resnet18_conv_64_56", 428, 1996, 366},
      {"resnet18_conv_256_14", 674, 1066, 58},
      {"mobilenetv2_pw_16_96", 1374, 10782, 685},
      {"mobilenetv2_dw960_7", 100, 468, 366},
  };
  bool ok = true;
  std::ostringstream os;
  for (const Want& w : wants) {
    auto it = rows.find(w.name);
    if (it == rows.end()) {
      ok = false;
      os << " missing row " << w.name << ";";
      continue;
    }
    const Row& r = it->second;
    const bool row_ok = std::llabs(r.s - w.s) <= 1 &&
                        std::llabs(r.d - w.d) <= 1 &&
                        std::llabs(r.pct - w.pct) <= 1;
    os << " " << w.name << " " << r.s << "/" << r.d << " +" << r.pct << "%";
    if (!row_ok) {
      ok = false;
      os << " (want " << w.s << "/" << w.d << " +" << w.pct << "%)";
    }
    os << ";";
  }
  detail = os.str();
  return ok;
}

// ---------------------------------------------------------------- criterion 2

bool check_overhead_identity(std::string& detail) {
  RandomSource rng(4242);
  for (int i = 0; i < 1000; ++i) {
    LayerGeom g;
    g.c_out = 1 + static_cast<int64_t>(rng.uniform_int(512));
    g.depthwise = rng.uniform_int(4) == 0;
    g.c_in = g.depthwise ? g.c_out
                         : 1 + static_cast<int64_t>(rng.uniform_int(512));
    g.k = 1 + static_cast<int64_t>(rng.uniform_int(8));
    g.w = 1 + static_cast<int64_t>(rng.uniform_int(225));
    g.h = 1 + static_cast<int64_t>(rng.uniform_int(225));
    BitWidths b;
    b.b_w = 1 + static_cast<int>(rng.uniform_int(16));
    b.b_a = 1 + static_cast<int>(rng.uniform_int(16));
    b.b_acc = std::min<int>(b.b_a + static_cast<int>(rng.uniform_int(33)), 64);

    const int64_t s = static_cost_bits(g, b);
    const int64_t d = dynamic_cost_bits(g, b);
    const int64_t want = 2 * g.c_out * g.w * g.h * b.b_acc;
    if (d - s != want) {
      detail = fmt("geometry %d: dynamic-static = %lld, expected %lld", i,
                   static_cast<long long>(d - s),
                   static_cast<long long>(want));
      return false;
    }
  }
  detail = " 1000 geometries exact";
  return true;
}

// ---------------------------------------------------------------- criterion 3

bool same_range(const QuantRange& a, const QuantRange& b) {
  return a.q_min == b.q_min && a.q_max == b.q_max;
}

bool check_estimator_laws(std::string& detail) {
  std::ostringstream os;

  // (a) causality: the step-t in-hindsight range never depends on the
  // step-t tensor.
  for (int s = 0; s < 100; ++s) {
    RandomSource rng(9000 + s);
    const double eta = 0.89 * rng.uniform();
    EstimatorConfig ec{EstimatorKind::InHindsightMinMax, eta, 100, 8};
    Estimator a(ec), b(ec);
    QuantRange ra{}, rb{};
    for (int t = 0; t < 4; ++t) {
      Tensor x = normal_tensor(64, rng);
      if (t < 3) {
        ra = a.range_for_step(x);
        rb = b.range_for_step(x);
      } else {
        Tensor y(x.shape());
        for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] * 1000.0f + 7.0f;
        ra = a.range_for_step(x);
        rb = b.range_for_step(y);
      }
    }
    if (!same_range(ra, rb)) {
      detail = fmt("causality broken on stream %d", s);
      return false;
    }
  }
  os << " causality x100 ok;";

  // (b) momentum 0 reductions are exact.
  {
    RandomSource rng(911);
    EstimatorConfig rc{EstimatorKind::RunningMinMax, 0.0, 100, 8};
    EstimatorConfig hc{EstimatorKind::InHindsightMinMax, 0.0, 100, 8};
    Estimator run(rc), hind(hc);
    Tensor prev;
    for (int t = 0; t < 10; ++t) {
      Tensor x = normal_tensor(97, rng, static_cast<float>(1 + t % 3));
      const auto [mn, mx] = reduce_min_max(x);
      const QuantRange rr = run.range_for_step(x);
      if (rr.q_min != static_cast<double>(mn) ||
          rr.q_max != static_cast<double>(mx)) {
        detail = fmt("running momentum-0 != current min-max at step %d", t);
        return false;
      }
      const QuantRange rh = hind.range_for_step(x);
      const Tensor& basis = t == 0 ? x : prev;
      const auto [pmn, pmx] = reduce_min_max(basis);
      if (rh.q_min != static_cast<double>(pmn) ||
          rh.q_max != static_cast<double>(pmx)) {
        detail = fmt("in-hindsight momentum-0 != previous min-max at step %d",
                     t);
        return false;
      }
      prev = x;
    }
  }
  os << " momentum-0 reductions exact;";

  // (c) EMA ranges stay inside the hull of everything seen so far.
  for (int s = 0; s < 20; ++s) {
    RandomSource rng(300 + s);
    const double eta = 0.99 * rng.uniform();
    const EstimatorKind kind = s % 2 == 0 ? EstimatorKind::RunningMinMax
                                          : EstimatorKind::InHindsightMinMax;
    Estimator est(EstimatorConfig{kind, eta, 100, 8});
    double hull_min = 0.0, hull_max = 0.0;
    for (int t = 0; t < 40; ++t) {
      Tensor x = normal_tensor(53, rng, static_cast<float>(1 + t % 5));
      const auto [mn, mx] = reduce_min_max(x);
      hull_min = t == 0 ? mn : std::min(hull_min, static_cast<double>(mn));
      hull_max = t == 0 ? mx : std::max(hull_max, static_cast<double>(mx));
      const QuantRange r = est.range_for_step(x);
      if (r.q_min < hull_min || r.q_max > hull_max || r.q_min > r.q_max) {
        detail = fmt("EMA range escaped the stream hull (stream %d, step %d)",
                     s, t);
        return false;
      }
    }
  }
  os << " EMA containment ok;";

  // (d) DSGC holds the step-0 range bitwise until the next search step.
  {
    RandomSource rng(555);
    Estimator est(EstimatorConfig{EstimatorKind::Dsgc, 0.9, 100, 8});
    Tensor t0 = normal_tensor(512, rng);
    t0[0] = 64.0f;
    const QuantRange r0 = est.range_for_step(t0);
    for (int t = 1; t < 100; ++t) {
      Tensor x = normal_tensor(512, rng, static_cast<float>(1 + t % 7));
      const QuantRange r = est.range_for_step(x);
      if (!same_range(r, r0)) {
        detail = fmt("DSGC range changed at held step %d", t);
        return false;
      }
    }
    Tensor x100 = normal_tensor(512, rng, 3.0f);
    const auto [mn, mx] = reduce_min_max(x100);
    const QuantRange r100 = est.range_for_step(x100);
    if (r100.q_min < static_cast<double>(mn) ||
        r100.q_max > static_cast<double>(mx)) {
      detail = "DSGC search step left the live tensor's min-max";
      return false;
    }
  }
  os << " DSGC hold 1..99 bitwise;";

  // (e) golden-section clip factor vs a 512-point grid oracle.
  {
    double worst = 0.0;
    for (int s = 0; s < 20; ++s) {
      RandomSource rng(7000 + s);
      Tensor x = normal_tensor(1000, rng);
      x[0] = s % 2 == 0 ? 100.0f : -100.0f;
      Estimator est(EstimatorConfig{EstimatorKind::Dsgc, 0.9, 100, 8});
      est.range_for_step(x);
      const double c_est = est.dsgc_clip_factor();

      const auto [mn, mx] = reduce_min_max(x);
      double best_c = 0.0, best_sim = -2.0;
      for (int i = 0; i < 512; ++i) {
        const double c =
            1.0 / 512.0 + (1.0 - 1.0 / 512.0) * i / 511.0;
        const QuantGrid grid = make_grid(
            {c * static_cast<double>(mn), c * static_cast<double>(mx)}, 8,
            Rounding::Nearest);
        const double sim = cosine_similarity(x, fake_quantize(x, grid));
        if (sim > best_sim) {
          best_sim = sim;
          best_c = c;
        }
      }
      worst = std::max(worst, std::abs(c_est - best_c));
      if (std::abs(c_est - best_c) > 0.02) {
        detail = fmt("DSGC clip %.4f vs oracle %.4f on tensor %d", c_est,
                     best_c, s);
        return false;
      }
    }
    os << fmt(" DSGC vs grid oracle worst gap %.4f;", worst);
  }

  detail = os.str();
  return true;
}

// ---------------------------------------------------------------- criterion 4

bool check_quantizer(std::string& detail) {
  std::ostringstream os;
  const QuantGrid grid = make_grid({-2.5, 4.0}, 8, Rounding::Nearest);
  RandomSource rng(1234);

  const int64_t n = 100000;
  Tensor x({n});
  for (int64_t i = 0; i < n; ++i)
    x[i] = static_cast<float>(-3.5 + 8.5 * rng.uniform());

  Tensor qx = fake_quantize(x, grid);

  // Idempotence: a second pass is the identity, bit for bit.
  Tensor qqx = fake_quantize(qx, grid);
  if (std::memcmp(qx.data(), qqx.data(), sizeof(float) * n) != 0) {
    detail = "fake quantization is not idempotent";
    return false;
  }

  // Grid membership (exact) and the s/2 bound for in-range inputs.
  for (int64_t i = 0; i < n; ++i) {
    const double v = static_cast<double>(qx[i]);
    const long long level =
        std::llround(v / grid.scale) + grid.zero_point;
    if (level < 0 || level > grid.qmax() ||
        static_cast<float>(grid.dequantize(static_cast<int>(level))) !=
            qx[i]) {
      detail = fmt("output %lld is not a grid level", static_cast<long long>(i));
      return false;
    }
    const double in = static_cast<double>(x[i]);
    if (in >= grid.lo() && in <= grid.hi() &&
        std::abs(in - v) > grid.scale / 2 + 1e-12) {
      detail = fmt("rounding error beyond s/2 at %lld",
                   static_cast<long long>(i));
      return false;
    }
  }

  // Monotonicity: sorted inputs quantize to a non-decreasing sequence.
  {
    std::vector<float> sorted(x.data(), x.data() + n);
    std::sort(sorted.begin(), sorted.end());
    Tensor xs({n});
    for (int64_t i = 0; i < n; ++i) xs[i] = sorted[static_cast<size_t>(i)];
    Tensor qs = fake_quantize(xs, grid);
    for (int64_t i = 1; i < n; ++i) {
      if (qs[i] < qs[i - 1]) {
        detail = fmt("monotonicity violated at %lld",
                     static_cast<long long>(i));
        return false;
      }
    }
  }
  os << " nearest: idempotent, on-grid, monotone, s/2 bound on 1e5;";

  // Stochastic rounding: empirical mean within 3 standard errors for 100
  // random in-range inputs, 1e5 draws each. A few 3-sigma excursions are
  // statistically expected; more than 3 of 100 is a failure.
  const QuantGrid sgrid = make_grid({-2.5, 4.0}, 8, Rounding::Stochastic);
  RandomSource draw_rng(777);
  int outliers = 0;
  const int64_t draws = 100000;
  Tensor rep({draws});
  for (int t = 0; t < 100; ++t) {
    const float v = static_cast<float>(
        sgrid.lo() + (sgrid.hi() - sgrid.lo()) * (0.005 + 0.99 * rng.uniform()));
    for (int64_t i = 0; i < draws; ++i) rep[i] = v;
    Tensor out = fake_quantize(rep, sgrid, &draw_rng);
    double mean = 0.0;
    for (int64_t i = 0; i < draws; ++i) mean += static_cast<double>(out[i]);
    mean /= static_cast<double>(draws);

    const double pos = static_cast<double>(v) / sgrid.scale;
    const double frac = pos - std::floor(pos);
    const double se =
        sgrid.scale * std::sqrt(frac * (1.0 - frac) /
                                static_cast<double>(draws));
    if (std::abs(mean - static_cast<double>(v)) > 3.0 * se + 1e-7) {
      ++outliers;
    }
  }
  if (outliers > 3) {
    detail = fmt("stochastic mean off by >3 SE for %d of 100 inputs",
                 outliers);
    return false;
  }
  os << fmt(" stochastic: %d/100 beyond 3 SE (<=3 allowed)", outliers);
  detail = os.str();
  return true;
}

// ---------------------------------------------------------------- criterion 5

bool check_gradients(std::string& detail) {
  std::ostringstream os;

  ModelConfig mlp;
  mlp.input_shape = {4};
  mlp.layers = {
      LayerSpec{.type = LayerType::Linear, .c_out = 8},
      LayerSpec{.type = LayerType::ReLU},
      LayerSpec{.type = LayerType::Linear, .c_out = 3},
  };

  ModelConfig conv;
  conv.input_shape = {1, 8, 8};
  conv.layers = {
      LayerSpec{.type = LayerType::Conv2d, .c_out = 2, .k = 3, .pad = 1},
      LayerSpec{.type = LayerType::BatchNorm},
      LayerSpec{.type = LayerType::ReLU},
      LayerSpec{.type = LayerType::MaxPool, .k = 2, .stride = 2},
      LayerSpec{.type = LayerType::Conv2d, .c_out = 3, .k = 3, .pad = 1},
      LayerSpec{.type = LayerType::BatchNorm},
      LayerSpec{.type = LayerType::ReLU},
      LayerSpec{.type = LayerType::GlobalAvgPool},
      LayerSpec{.type = LayerType::Linear, .c_out = 3},
  };

  struct Case {
    const char* name;
    ModelConfig* mc;
    int64_t batch;
    std::vector<int64_t> labels;
    uint64_t seed;
  };
  Case cases[] = {{"mlp", &mlp, 5, {0, 1, 2, 0, 1}, 11},
                  {"conv", &conv, 2, {0, 2}, 7}};
  for (const Case& c : cases) {
    refnet::GradCheckResult r =
        refnet::run_gradcheck(*c.mc, c.batch, c.labels, c.seed);
    if (r.param_count > 500) {
      detail = fmt("%s has %lld parameters (budget 500)", c.name,
                   static_cast<long long>(r.param_count));
      return false;
    }
    if (r.forward_gap >= 5e-5) {
      detail = fmt("%s forward gap %.2e vs float64 reference", c.name,
                   r.forward_gap);
      return false;
    }
    if (r.worst_ratio > 1.0 || r.max_abs_grad <= 1e-4) {
      detail = fmt("%s worst gradient mismatch %.3fx tolerance at %s", c.name,
                   r.worst_ratio, r.worst_at.c_str());
      return false;
    }
    os << fmt(" %s: %lld params, worst %.3fx tolerance;", c.name,
              static_cast<long long>(r.param_count), r.worst_ratio);
  }
  detail = os.str();
  return true;
}

// ---------------------------------------------------------------- criterion 6

// 28x28 sinusoidal gratings in 10 classes: 5 orientations x 2 spatial
// frequencies, random phase, light pixel noise, stored as IDX bytes.
void write_gratings(const std::string& images_path,
                    const std::string& labels_path, int64_t per_class,
                    uint64_t seed) {
  const int64_t n = per_class * 10, side = 28;
  RandomSource rng(seed);
  const double pi = 3.14159265358979323846;

  std::vector<unsigned char> pix(static_cast<size_t>(n * side * side));
  std::vector<unsigned char> labels(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const int64_t k = i % 10;
    labels[static_cast<size_t>(i)] = static_cast<unsigned char>(k);
    const double theta = pi * static_cast<double>(k % 5) / 5.0;
    const double freq = 2.0 + 3.0 * static_cast<double>(k / 5);
    const double phase = 2.0 * pi * rng.uniform();
    const double cx = std::cos(theta), sx = std::sin(theta);
    for (int64_t y = 0; y < side; ++y) {
      for (int64_t x = 0; x < side; ++x) {
        const double u =
            (static_cast<double>(x) * cx + static_cast<double>(y) * sx) /
            static_cast<double>(side);
        double v = 0.5 + 0.45 * std::sin(2.0 * pi * freq * u + phase) +
                   0.03 * rng.normal();
        v = std::min(1.0, std::max(0.0, v));
        pix[static_cast<size_t>((i * side + y) * side + x)] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }

  auto be32 = [](std::ofstream& out, uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };

  std::ofstream img(images_path, std::ios::binary | std::ios::trunc);
  const unsigned char img_magic[4] = {0, 0, 0x08, 3};
  img.write(reinterpret_cast<const char*>(img_magic), 4);
  be32(img, static_cast<uint32_t>(n));
  be32(img, static_cast<uint32_t>(side));
  be32(img, static_cast<uint32_t>(side));
  img.write(reinterpret_cast<const char*>(pix.data()),
            static_cast<std::streamsize>(pix.size()));

  std::ofstream lab(labels_path, std::ios::binary | std::ios::trunc);
  const unsigned char lab_magic[4] = {0, 0, 0x08, 1};
  lab.write(reinterpret_cast<const char*>(lab_magic), 4);
  be32(lab, static_cast<uint32_t>(n));
  lab.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
}

QuantSpec running_minmax_spec() {
  QuantSpec s = default_quant_spec();
  s.activations.estimator.kind = EstimatorKind::RunningMinMax;
  s.gradients.estimator.kind = EstimatorKind::RunningMinMax;
  return s;
}

double mean_val_acc(const RunConfig& base, const QuantSpec& spec, int seeds) {
  double sum = 0.0;
  for (int i = 0; i < seeds; ++i) {
    RunConfig cfg = base;
    cfg.seed = base.seed + static_cast<uint64_t>(i);
    cfg.quant = spec;
    MetricsRecord rec = run_training(cfg);
    if (!rec.val_acc) {
      throw StateError("parity run produced no validation accuracy");
    }
    sum += *rec.val_acc;
  }
  return sum / static_cast<double>(seeds);
}

bool check_parity(std::string& detail) {
  std::ostringstream os;
  bool ok = true;

  {
    RunConfig b;
    b.seed = 301;
    b.dataset.kind = DatasetConfig::Kind::Blobs;
    b.dataset.blobs.classes = 3;
    b.dataset.blobs.dim = 2;
    b.dataset.blobs.samples = 1500;
    b.dataset.blobs.noise_sigma = 0.1;
    b.dataset.val_samples = 300;
    b.epochs = 5;
    b.batch_size = 64;
    b.optimizer.lr = 0.05;
    b.calibration_batches = 2;

    const double fp32 = mean_val_acc(b, QuantSpec{}, 3);
    const double hind = mean_val_acc(b, default_quant_spec(), 3);
    const double run = mean_val_acc(b, running_minmax_spec(), 3);
    os << fmt(" blobs fp32=%.4f in_hindsight=%.4f running=%.4f;", fp32, hind,
              run);
    if (std::abs(hind - fp32) > 0.02 || std::abs(hind - run) > 0.01) {
      ok = false;
    }
  }

  {
    const std::string ti = (g_tmp / "gratings_train_images.idx").string();
    const std::string tl = (g_tmp / "gratings_train_labels.idx").string();
    const std::string vi = (g_tmp / "gratings_val_images.idx").string();
    const std::string vl = (g_tmp / "gratings_val_labels.idx").string();
    write_gratings(ti, tl, 400, 2024);
    write_gratings(vi, vl, 100, 2025);

    RunConfig g;
    g.seed = 401;
    g.dataset.kind = DatasetConfig::Kind::Idx;
    g.dataset.images = ti;
    g.dataset.labels = tl;
    g.dataset.val_images = vi;
    g.dataset.val_labels = vl;
    g.epochs = 5;
    g.batch_size = 64;
    g.optimizer.lr = 0.05;
    g.calibration_batches = 2;

    const double fp32 = mean_val_acc(g, QuantSpec{}, 3);
    const double hind = mean_val_acc(g, default_quant_spec(), 3);
    const double run = mean_val_acc(g, running_minmax_spec(), 3);
    os << fmt(" gratings fp32=%.4f in_hindsight=%.4f running=%.4f;", fp32,
              hind, run);
    if (std::abs(hind - fp32) > 0.02 || std::abs(hind - run) > 0.01) {
      ok = false;
    }
  }

  detail = os.str();
  return ok;
}

// ---------------------------------------------------------------- criterion 7

std::vector<std::string> canonical_metrics(const std::string& path) {
  std::vector<std::string> lines;
  for (const std::string& line : read_lines(path)) {
    MetricsRecord rec = metrics_from_json_line(line);
    rec.wall_ms = 0;
    lines.push_back(metrics_to_json_line(rec));
  }
  return lines;
}

bool check_determinism(std::string& detail) {
  const std::string cfg = g_data + "/configs/blobs_inhindsight.json";
  const std::string m1 = (g_tmp / "det1.jsonl").string();
  const std::string m2 = (g_tmp / "det2.jsonl").string();
  const std::string k1 = (g_tmp / "det1.ckpt").string();
  const std::string k2 = (g_tmp / "det2.ckpt").string();

  for (int i = 0; i < 2; ++i) {
    const std::string cmd =
        shq(g_cli) + " train --config " + shq(cfg) + " --out " +
        shq(i == 0 ? m1 : m2) + " --checkpoint " + shq(i == 0 ? k1 : k2) +
        " > /dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) {
      detail = fmt("train invocation %d failed", i + 1);
      return false;
    }
  }

  const auto l1 = canonical_metrics(m1);
  const auto l2 = canonical_metrics(m2);
  if (l1.empty() || l1 != l2) {
    detail = fmt("metrics differ (%zu vs %zu lines)", l1.size(), l2.size());
    return false;
  }
  const auto b1 = read_bytes(k1);
  const auto b2 = read_bytes(k2);
  if (b1.empty() || b1 != b2) {
    detail = "checkpoints are not bit-identical";
    return false;
  }
  detail = fmt(" %zu metrics lines identical modulo wall_ms; checkpoints"
               " bit-identical (%zu bytes)",
               l1.size(), b1.size());
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: %s <qsim-cli> <data-dir>\n", argv[0]);
    return 2;
  }
  g_cli = argv[1];
  g_data = argv[2];
  g_tmp = std::filesystem::temp_directory_path() / "qsim_acceptance";
  std::filesystem::create_directories(g_tmp);

  struct Criterion {
    int id;
    const char* name;
    std::function<bool(std::string&)> fn;
  };
  const std::vector<Criterion> criteria = {
      {1, "cost table reference rows", check_cost_table},
      {2, "dynamic-static overhead identity", check_overhead_identity},
      {3, "range estimator laws", check_estimator_laws},
      {4, "quantizer correctness", check_quantizer},
      {5, "gradient fidelity", check_gradients},
      {6, "desk-scale training parity", check_parity},
      {7, "train determinism", check_determinism},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string(" exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    std::printf("%s  criterion %d: %s (%.1fs)%s\n", ok ? "PASS" : "FAIL", c.id,
                c.name, secs, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }

  if (failures > 0) {
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return 1;
  }
  std::printf("all %zu criteria passed\n", criteria.size());
  return 0;
}
