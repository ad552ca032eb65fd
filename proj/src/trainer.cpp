#include "qsim/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <memory>
#include <numeric>
#include <sstream>

#include "qsim/checkpoint.hpp"
#include "qsim/dataset.hpp"
#include "qsim/error.hpp"
#include "qsim/loss.hpp"
#include "qsim/model.hpp"
#include "qsim/optimizer.hpp"
#include "qsim/random.hpp"

namespace qsim {
namespace {

using Clock = std::chrono::steady_clock;

int64_t elapsed_ms(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() -
                                                               start)
      .count();
}

// Splits off the last round(n * fraction) samples as a validation set.
void split_tail(const Dataset& all, double fraction, Dataset* train,
                Dataset* val) {
  const int64_t n = all.size();
  const int64_t val_n =
      static_cast<int64_t>(std::floor(static_cast<double>(n) * fraction + 0.5));
  if (val_n >= n) {
    throw ConfigError("dataset: validation split leaves no training samples");
  }
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<int64_t> train_idx(idx.begin(), idx.end() - val_n);
  std::vector<int64_t> val_idx(idx.end() - val_n, idx.end());
  train->images = gather_batch(all, train_idx, &train->labels);
  train->classes = all.classes;
  if (val_n > 0) {
    val->images = gather_batch(all, val_idx, &val->labels);
    val->classes = all.classes;
  }
}

void build_datasets(const RunConfig& cfg, RandomSource& rng, Dataset* train,
                    Dataset* val) {
  if (cfg.dataset.kind == DatasetConfig::Kind::Blobs) {
    *train = synth_blobs(cfg.dataset.blobs, rng);
    if (cfg.dataset.val_samples > 0) {
      BlobsConfig vb = cfg.dataset.blobs;
      vb.samples = cfg.dataset.val_samples;
      *val = synth_blobs(vb, rng);
    }
    return;
  }
  Dataset all = load_idx(cfg.dataset.images, cfg.dataset.labels,
                         cfg.dataset.limit);
  if (!cfg.dataset.val_images.empty()) {
    *train = std::move(all);
    *val = load_idx(cfg.dataset.val_images, cfg.dataset.val_labels, 0);
    return;
  }
  split_tail(all, cfg.dataset.val_fraction, train, val);
}

// argmax with ties to the lowest index, matching the loss-side accuracy.
int64_t count_correct(const Tensor& logits,
                      const std::vector<int64_t>& labels) {
  const int64_t n = logits.extent(0);
  const int64_t k = logits.extent(1);
  int64_t correct = 0;
  for (int64_t i = 0; i < n; ++i) {
    const float* row = logits.data() + i * k;
    int64_t best = 0;
    for (int64_t j = 1; j < k; ++j) {
      if (row[j] > row[best]) {
        best = j;
      }
    }
    if (best == labels[static_cast<size_t>(i)]) {
      ++correct;
    }
  }
  return correct;
}

double evaluate(Model& model, const Dataset& val, int64_t batch_size) {
  int64_t correct = 0;
  const int64_t n = val.size();
  for (int64_t start = 0; start < n; start += batch_size) {
    const int64_t stop = std::min(n, start + batch_size);
    std::vector<int64_t> idx;
    for (int64_t i = start; i < stop; ++i) {
      idx.push_back(i);
    }
    std::vector<int64_t> labels;
    Tensor x = gather_batch(val, idx, &labels);
    Tape tape;
    Tensor logits = model.forward_quantized(x, Mode::Eval, tape);
    correct += count_correct(logits, labels);
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::vector<SiteMetric> sorted_sites(const Model& model) {
  std::vector<SiteMetric> sites;
  for (const SiteTelemetry& t : model.site_telemetry()) {
    SiteMetric m;
    m.layer = "layer" + std::to_string(t.layer);
    m.role = t.role;
    m.q_min = t.q_min;
    m.q_max = t.q_max;
    m.saturation = t.saturation;
    sites.push_back(std::move(m));
  }
  std::sort(sites.begin(), sites.end(),
            [](const SiteMetric& a, const SiteMetric& b) {
              if (a.layer != b.layer) {
                return a.layer < b.layer;
              }
              return a.role < b.role;
            });
  return sites;
}

std::string divergence_dump(int64_t step, double loss,
                            const std::vector<SiteMetric>& sites) {
  std::ostringstream os;
  os << "training diverged at step " << step << " (loss=" << loss << ")";
  if (!sites.empty()) {
    os << "; site ranges:";
    for (const SiteMetric& s : sites) {
      os << ' ' << s.layer << '/' << s.role << " [" << s.q_min << ", "
         << s.q_max << "] saturation=" << s.saturation << ';';
    }
  }
  return os.str();
}

}  // namespace

MetricsRecord run_training(const RunConfig& cfg,
                           const std::string& metrics_path,
                           const std::string& checkpoint_path) {
  const Clock::time_point t0 = Clock::now();
  RandomSource rng(cfg.seed);

  Dataset train;
  Dataset val;
  build_datasets(cfg, rng, &train, &val);
  if (train.size() == 0) {
    throw ConfigError("dataset: no training samples");
  }
  if (cfg.batch_size > train.size()) {
    throw ConfigError("config: batch_size " + std::to_string(cfg.batch_size) +
                      " exceeds training set size " +
                      std::to_string(train.size()));
  }
  const int64_t classes = std::max(train.classes, val.classes);

  ModelConfig mc;
  if (cfg.use_default_model) {
    mc = default_model(train.sample_shape(), classes);
  } else {
    mc = cfg.model;
    mc.input_shape = train.sample_shape();
  }
  Model model(mc, cfg.quant, rng);
  SgdOptimizer opt(cfg.optimizer, model.params());

  std::unique_ptr<MetricsWriter> writer;
  if (!metrics_path.empty()) {
    writer = std::make_unique<MetricsWriter>(metrics_path);
  }

  // Calibration replays training forwards over the leading batches in file
  // order, then rewinds the step counters so step 0 of training still sees
  // the warmed ranges as "previous" state.
  if (cfg.calibration_batches > 0) {
    const int64_t n = train.size();
    for (int64_t b = 0; b < cfg.calibration_batches; ++b) {
      std::vector<int64_t> idx;
      for (int64_t j = 0; j < cfg.batch_size; ++j) {
        idx.push_back((b * cfg.batch_size + j) % n);
      }
      std::vector<int64_t> labels;
      Tensor x = gather_batch(train, idx, &labels);
      Tape tape;
      model.forward_quantized(x, Mode::Calibrate, tape, &rng);
    }
    model.reset_estimator_steps();
  }

  MetricsRecord final_rec;
  final_rec.kind = "final";

  int64_t global_step = 0;
  std::vector<SiteMetric> last_sites;
  std::vector<int64_t> order(static_cast<size_t>(train.size()));
  std::iota(order.begin(), order.end(), 0);

  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(cfg.optimizer.schedule, epoch, cfg.epochs,
                            cfg.optimizer.lr);
    rng.shuffle(order);

    int64_t correct = 0;
    int64_t seen = 0;
    double last_loss = 0.0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      const size_t stop = std::min(
          order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<int64_t> idx(order.begin() + start, order.begin() + stop);
      std::vector<int64_t> labels;
      Tensor x = gather_batch(train, idx, &labels);

      Tape tape;
      Tensor logits = model.forward_quantized(x, Mode::Train, tape, &rng);
      LossResult loss = softmax_cross_entropy(logits, labels);
      if (!std::isfinite(loss.loss)) {
        throw DivergenceError(
            divergence_dump(global_step, loss.loss, sorted_sites(model)));
      }
      model.backward_quantized(tape, loss.grad, &rng);
      opt.step(lr);

      ++global_step;
      correct += loss.correct;
      seen += static_cast<int64_t>(idx.size());
      last_loss = loss.loss;
      last_sites = sorted_sites(model);

      if (writer) {
        MetricsRecord rec;
        rec.kind = "step";
        rec.step = global_step;
        rec.epoch = epoch;
        rec.loss = loss.loss;
        rec.lr = lr;
        rec.sites = last_sites;
        rec.wall_ms = elapsed_ms(t0);
        writer->write(rec);
      }
    }

    const double train_acc =
        static_cast<double>(correct) / static_cast<double>(seen);
    final_rec.train_acc = train_acc;
    final_rec.loss = last_loss;
    final_rec.lr = lr;
    if (val.size() > 0) {
      final_rec.val_acc = evaluate(model, val, cfg.batch_size);
    }

    if (writer) {
      MetricsRecord rec;
      rec.kind = "epoch";
      rec.epoch = epoch;
      rec.train_acc = train_acc;
      rec.val_acc = final_rec.val_acc;
      rec.wall_ms = elapsed_ms(t0);
      writer->write(rec);
    }
  }

  final_rec.step = global_step;
  final_rec.epoch = cfg.epochs > 0 ? cfg.epochs - 1 : 0;
  final_rec.sites = last_sites;
  final_rec.wall_ms = elapsed_ms(t0);
  if (writer) {
    writer->write(final_rec);
  }

  if (!checkpoint_path.empty()) {
    std::vector<NamedTensor> tensors;
    for (Param* p : model.state_tensors()) {
      tensors.push_back({p->name, p->value});
    }
    save_checkpoint(checkpoint_path, tensors);
  }
  return final_rec;
}

}  // namespace qsim
