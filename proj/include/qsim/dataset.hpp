#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qsim/random.hpp"
#include "qsim/tensor.hpp"

namespace qsim {

// Labeled samples held as one tensor with the batch as dim 0.
struct Dataset {
  Tensor images;                // [N, ...sample shape]
  std::vector<int64_t> labels;  // length N
  int64_t classes = 0;

  int64_t size() const { return images.numel() > 0 ? images.extent(0) : 0; }
  std::vector<int64_t> sample_shape() const;
};

/// Reads the big-endian IDX pair: header 00 00 <dtype> <rank>, rank u32
/// extents, payload. Only dtype 0x08 (unsigned byte) is supported. Pixels
/// rescale to [0,1]; rank-3 image files come back as [N,1,H,W]. limit > 0
/// keeps only the first `limit` samples.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 int64_t limit = 0);

struct BlobsConfig {
  int64_t classes = 3;
  int64_t dim = 2;
  int64_t samples = 1000;
  double noise_sigma = 0.1;
};

/// Gaussian blobs around class means spaced at equal angles on the unit
/// circle of the first two coordinates. Sample i belongs to class i mod K.
Dataset synth_blobs(const BlobsConfig& cfg, RandomSource& rng);

/// Rows `indices` of the dataset as one batch tensor plus their labels.
Tensor gather_batch(const Dataset& d, const std::vector<int64_t>& indices,
                    std::vector<int64_t>* labels_out);

}  // namespace qsim
