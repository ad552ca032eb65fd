#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qsim/tensor.hpp"

namespace qsim {

// Flat binary tensor container:
//   magic "QRLB", version u32 little-endian,
//   then per-tensor records until end of file:
//     name length u16 LE, name bytes, rank u8, extents u32 LE each,
//     payload as little-endian f32.
// Records appear in the exact order given to save_checkpoint, so identical
// tensor sets produce bit-identical files.

struct NamedTensor {
  std::string name;
  Tensor value;
};

void save_checkpoint(const std::string& path,
                     const std::vector<NamedTensor>& tensors);

// Throws IoError on missing file, bad magic, unsupported version, or any
// truncated record.
std::vector<NamedTensor> load_checkpoint(const std::string& path);

}  // namespace qsim
