#include "qsim/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "qsim/error.hpp"

namespace qsim {
namespace {

struct IdxBlob {
  std::vector<int64_t> extents;
  std::vector<unsigned char> payload;
};

uint32_t read_be_u32(const unsigned char* p) {
  return (static_cast<uint32_t>(p[0]) << 24) |
         (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

IdxBlob read_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("idx: cannot open " + path);
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 4) {
    throw IoError("idx: truncated header in " + path);
  }
  if (bytes[0] != 0 || bytes[1] != 0) {
    throw IoError("idx: bad magic in " + path);
  }
  const unsigned dtype = bytes[2];
  const unsigned rank = bytes[3];
  if (dtype != 0x08) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "0x%02x", dtype);
    throw IoError("idx: unsupported dtype " + std::string(buf) + " in " +
                  path + " (only unsigned byte, 0x08)");
  }
  if (rank == 0 || bytes.size() < 4 + 4 * static_cast<size_t>(rank)) {
    throw IoError("idx: truncated extent list in " + path);
  }
  IdxBlob b;
  int64_t numel = 1;
  for (unsigned i = 0; i < rank; ++i) {
    const uint32_t e = read_be_u32(bytes.data() + 4 + 4 * i);
    if (e == 0) {
      throw IoError("idx: zero extent in " + path);
    }
    b.extents.push_back(static_cast<int64_t>(e));
    numel *= static_cast<int64_t>(e);
  }
  const size_t off = 4 + 4 * static_cast<size_t>(rank);
  if (bytes.size() - off != static_cast<size_t>(numel)) {
    throw IoError("idx: payload of " + path + " holds " +
                  std::to_string(bytes.size() - off) + " bytes, header wants " +
                  std::to_string(numel));
  }
  b.payload.assign(bytes.begin() + static_cast<int64_t>(off), bytes.end());
  return b;
}

}  // namespace

std::vector<int64_t> Dataset::sample_shape() const {
  std::vector<int64_t> s(images.shape().begin() + 1, images.shape().end());
  return s;
}

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path, int64_t limit) {
  IdxBlob img = read_idx(images_path);
  IdxBlob lab = read_idx(labels_path);
  if (lab.extents.size() != 1) {
    throw IoError("idx: labels must be rank 1, got rank " +
                  std::to_string(lab.extents.size()) + " in " + labels_path);
  }
  if (img.extents.empty() || img.extents[0] != lab.extents[0]) {
    throw IoError("idx: image/label count mismatch, " +
                  std::to_string(img.extents.empty() ? 0 : img.extents[0]) +
                  " vs " + std::to_string(lab.extents[0]));
  }
  int64_t n = img.extents[0];
  if (limit > 0 && limit < n) {
    n = limit;
  }

  std::vector<int64_t> shape{n};
  if (img.extents.size() == 3) {
    shape.push_back(1);  // channel dim for conv input
  }
  int64_t per_sample = 1;
  for (size_t i = 1; i < img.extents.size(); ++i) {
    shape.push_back(img.extents[i]);
    per_sample *= img.extents[i];
  }

  Dataset d;
  d.images = Tensor(shape);
  for (int64_t i = 0; i < n * per_sample; ++i) {
    d.images[i] = static_cast<float>(img.payload[static_cast<size_t>(i)]) /
                  255.0f;
  }
  d.labels.reserve(static_cast<size_t>(n));
  int64_t max_label = 0;
  for (int64_t i = 0; i < n; ++i) {
    const int64_t l = lab.payload[static_cast<size_t>(i)];
    max_label = l > max_label ? l : max_label;
    d.labels.push_back(l);
  }
  d.classes = max_label + 1;
  return d;
}

Dataset synth_blobs(const BlobsConfig& cfg, RandomSource& rng) {
  if (cfg.classes < 2) {
    throw ConfigError("blobs: need at least 2 classes");
  }
  if (cfg.dim < 2) {
    throw ConfigError("blobs: need dim >= 2");
  }
  if (cfg.samples < 1) {
    throw ConfigError("blobs: need at least 1 sample");
  }
  if (cfg.noise_sigma < 0.0) {
    throw ConfigError("blobs: noise_sigma must be >= 0");
  }
  const double pi = 3.14159265358979323846;
  Dataset d;
  d.classes = cfg.classes;
  d.images = Tensor({cfg.samples, cfg.dim});
  d.labels.resize(static_cast<size_t>(cfg.samples));
  for (int64_t i = 0; i < cfg.samples; ++i) {
    const int64_t k = i % cfg.classes;
    d.labels[static_cast<size_t>(i)] = k;
    const double theta =
        2.0 * pi * static_cast<double>(k) / static_cast<double>(cfg.classes);
    for (int64_t j = 0; j < cfg.dim; ++j) {
      double mean = 0.0;
      if (j == 0) {
        mean = std::cos(theta);
      } else if (j == 1) {
        mean = std::sin(theta);
      }
      d.images[i * cfg.dim + j] =
          static_cast<float>(mean + cfg.noise_sigma * rng.normal());
    }
  }
  return d;
}

Tensor gather_batch(const Dataset& d, const std::vector<int64_t>& indices,
                    std::vector<int64_t>* labels_out) {
  if (indices.empty()) {
    throw ValueError("gather_batch: empty index list");
  }
  const int64_t per_sample = d.images.numel() / d.images.extent(0);
  std::vector<int64_t> shape = d.images.shape();
  shape[0] = static_cast<int64_t>(indices.size());
  Tensor batch(shape);
  if (labels_out != nullptr) {
    labels_out->clear();
    labels_out->reserve(indices.size());
  }
  for (size_t bi = 0; bi < indices.size(); ++bi) {
    const int64_t src = indices[bi];
    if (src < 0 || src >= d.size()) {
      throw ValueError("gather_batch: index " + std::to_string(src) +
                       " outside dataset of " + std::to_string(d.size()));
    }
    const float* from = d.images.data() + src * per_sample;
    float* to = batch.data() + static_cast<int64_t>(bi) * per_sample;
    for (int64_t i = 0; i < per_sample; ++i) {
      to[i] = from[i];
    }
    if (labels_out != nullptr) {
      labels_out->push_back(d.labels[static_cast<size_t>(src)]);
    }
  }
  return batch;
}

}  // namespace qsim
