#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace qsim {

// One quantization site's range and clipping telemetry for a single step.
struct SiteMetric {
  std::string layer;
  std::string role;  // "weight", "activation", or "gradient"
  double q_min = 0.0;
  double q_max = 0.0;
  double saturation = 0.0;  // fraction of elements clipped to the grid edge
};

// A single metrics line. `kind` selects which fields are populated:
//   "step":  step, epoch, loss, lr, sites, wall_ms
//   "epoch": epoch, train_acc, val_acc, wall_ms
//   "final": everything above
struct MetricsRecord {
  std::string kind;
  int64_t step = 0;
  int64_t epoch = 0;
  std::optional<double> loss;
  std::optional<double> train_acc;
  std::optional<double> val_acc;
  std::optional<double> lr;
  std::vector<SiteMetric> sites;
  int64_t wall_ms = 0;
};

// Serializes one record as a single JSON object with deterministically
// ordered keys. Everything except wall_ms is reproducible given the same
// config and seed.
std::string metrics_to_json_line(const MetricsRecord& rec);

// Parses one JSONL line back into a record. Throws IoError on malformed
// input or on a kind/field combination the writer would never produce.
MetricsRecord metrics_from_json_line(const std::string& line);

// Append-only JSONL sink. Flushes after every record so partial runs leave
// valid files behind.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);

  void write(const MetricsRecord& rec);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
};

// Round-trips every line of a metrics file; throws IoError on the first
// line that fails to parse or re-serialize identically.
void validate_metrics_file(const std::string& path);

}  // namespace qsim
