#include "qsim/metrics.hpp"

#include <json.hpp>

#include "qsim/error.hpp"

namespace qsim {
namespace {

using nlohmann::json;

json sites_to_json(const std::vector<SiteMetric>& sites) {
  json arr = json::array();
  for (const SiteMetric& s : sites) {
    arr.push_back({{"layer", s.layer},
                   {"role", s.role},
                   {"q_min", s.q_min},
                   {"q_max", s.q_max},
                   {"saturation", s.saturation}});
  }
  return arr;
}

std::vector<SiteMetric> sites_from_json(const json& arr) {
  std::vector<SiteMetric> sites;
  for (const json& s : arr) {
    SiteMetric m;
    m.layer = s.at("layer").get<std::string>();
    m.role = s.at("role").get<std::string>();
    m.q_min = s.at("q_min").get<double>();
    m.q_max = s.at("q_max").get<double>();
    m.saturation = s.at("saturation").get<double>();
    sites.push_back(std::move(m));
  }
  return sites;
}

}  // namespace

std::string metrics_to_json_line(const MetricsRecord& rec) {
  json j;
  j["kind"] = rec.kind;
  j["wall_ms"] = rec.wall_ms;
  if (rec.kind == "step" || rec.kind == "final") {
    j["step"] = rec.step;
    j["epoch"] = rec.epoch;
    if (rec.loss) {
      j["loss"] = *rec.loss;
    }
    if (rec.lr) {
      j["lr"] = *rec.lr;
    }
    j["sites"] = sites_to_json(rec.sites);
  }
  if (rec.kind == "epoch" || rec.kind == "final") {
    j["epoch"] = rec.epoch;
    if (rec.train_acc) {
      j["train_acc"] = *rec.train_acc;
    }
    if (rec.val_acc) {
      j["val_acc"] = *rec.val_acc;
    }
  }
  if (rec.kind != "step" && rec.kind != "epoch" && rec.kind != "final") {
    throw ValueError("metrics: unknown record kind '" + rec.kind + "'");
  }
  return j.dump();
}

MetricsRecord metrics_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw IoError(std::string("metrics: bad JSONL line: ") + e.what());
  }
  try {
    MetricsRecord rec;
    rec.kind = j.at("kind").get<std::string>();
    if (rec.kind != "step" && rec.kind != "epoch" && rec.kind != "final") {
      throw IoError("metrics: unknown record kind '" + rec.kind + "'");
    }
    rec.wall_ms = j.at("wall_ms").get<int64_t>();
    if (rec.kind == "step" || rec.kind == "final") {
      rec.step = j.at("step").get<int64_t>();
      rec.epoch = j.at("epoch").get<int64_t>();
      if (j.contains("loss")) {
        rec.loss = j.at("loss").get<double>();
      }
      if (j.contains("lr")) {
        rec.lr = j.at("lr").get<double>();
      }
      rec.sites = sites_from_json(j.at("sites"));
    }
    if (rec.kind == "epoch" || rec.kind == "final") {
      rec.epoch = j.at("epoch").get<int64_t>();
      if (j.contains("train_acc")) {
        rec.train_acc = j.at("train_acc").get<double>();
      }
      if (j.contains("val_acc")) {
        rec.val_acc = j.at("val_acc").get<double>();
      }
    }
    return rec;
  } catch (const json::exception& e) {
    throw IoError(std::string("metrics: bad record: ") + e.what());
  }
}

MetricsWriter::MetricsWriter(const std::string& path)
    : path_(path), out_(path, std::ios::trunc) {
  if (!out_) {
    throw IoError("metrics: cannot open " + path + " for writing");
  }
}

void MetricsWriter::write(const MetricsRecord& rec) {
  out_ << metrics_to_json_line(rec) << '\n';
  out_.flush();
  if (!out_) {
    throw IoError("metrics: write failure on " + path_);
  }
}

void validate_metrics_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("metrics: cannot open " + path);
  }
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      throw IoError("metrics: empty line " + std::to_string(lineno) + " in " +
                    path);
    }
    MetricsRecord rec = metrics_from_json_line(line);
    const std::string again = metrics_to_json_line(rec);
    // The writer emits canonical nlohmann dumps, so a faithful round trip
    // reproduces the line byte for byte.
    if (again != line) {
      throw IoError("metrics: line " + std::to_string(lineno) + " in " + path +
                    " does not round-trip");
    }
  }
  if (lineno == 0) {
    throw IoError("metrics: " + path + " is empty");
  }
}

}  // namespace qsim
