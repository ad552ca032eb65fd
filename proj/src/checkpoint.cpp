#include "qsim/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "qsim/error.hpp"

namespace qsim {
namespace {

constexpr char kMagic[4] = {'Q', 'R', 'L', 'B'};
constexpr uint32_t kVersion = 1;

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

void put_f32(std::string& out, float v) {
  uint32_t bits = 0;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(std::string data, std::string path)
      : data_(std::move(data)), path_(std::move(path)) {}

  bool at_end() const { return pos_ == data_.size(); }

  uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }

  uint16_t u16() {
    const char* p = take(2);
    return static_cast<uint16_t>(static_cast<uint8_t>(p[0]) |
                                 (static_cast<uint8_t>(p[1]) << 8));
  }

  uint32_t u32() {
    const char* p = take(4);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
      v = (v << 8) | static_cast<uint8_t>(p[i]);
    }
    return v;
  }

  float f32() {
    const uint32_t bits = u32();
    float v = 0.0f;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::string str(size_t n) { return std::string(take(n), n); }

 private:
  const char* take(size_t n) {
    if (pos_ + n > data_.size()) {
      throw IoError("checkpoint: truncated file " + path_);
    }
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::string data_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<NamedTensor>& tensors) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  {
    std::string hdr;
    put_u32(hdr, kVersion);
    out += hdr;
  }
  for (const NamedTensor& t : tensors) {
    if (t.name.empty() ||
        t.name.size() > std::numeric_limits<uint16_t>::max()) {
      throw ValueError("checkpoint: bad tensor name length for '" + t.name +
                       "'");
    }
    if (t.value.rank() == 0 || t.value.rank() > 255) {
      throw ValueError("checkpoint: tensor '" + t.name +
                       "' has unsupported rank");
    }
    std::string rec;
    put_u16(rec, static_cast<uint16_t>(t.name.size()));
    rec += t.name;
    rec.push_back(static_cast<char>(t.value.rank()));
    for (int64_t d = 0; d < t.value.rank(); ++d) {
      const int64_t e = t.value.extent(d);
      if (e <= 0 || e > std::numeric_limits<uint32_t>::max()) {
        throw ValueError("checkpoint: tensor '" + t.name +
                         "' has an extent outside u32 range");
      }
      put_u32(rec, static_cast<uint32_t>(e));
    }
    for (int64_t i = 0; i < t.value.numel(); ++i) {
      put_f32(rec, t.value.data()[i]);
    }
    out += rec;
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw IoError("checkpoint: cannot open " + path + " for writing");
  }
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  f.flush();
  if (!f) {
    throw IoError("checkpoint: write failure on " + path);
  }
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw IoError("checkpoint: cannot open " + path);
  }
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  Reader r(std::move(data), path);

  const std::string magic = r.str(4);
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError("checkpoint: bad magic in " + path);
  }
  const uint32_t version = r.u32();
  if (version != kVersion) {
    throw IoError("checkpoint: unsupported version " +
                  std::to_string(version) + " in " + path);
  }

  std::vector<NamedTensor> tensors;
  while (!r.at_end()) {
    const uint16_t name_len = r.u16();
    if (name_len == 0) {
      throw IoError("checkpoint: empty tensor name in " + path);
    }
    NamedTensor t;
    t.name = r.str(name_len);
    const uint8_t rank = r.u8();
    if (rank == 0) {
      throw IoError("checkpoint: zero-rank tensor '" + t.name + "' in " +
                    path);
    }
    std::vector<int64_t> shape;
    int64_t numel = 1;
    for (int i = 0; i < rank; ++i) {
      const uint32_t e = r.u32();
      if (e == 0) {
        throw IoError("checkpoint: zero extent in tensor '" + t.name +
                      "' in " + path);
      }
      shape.push_back(static_cast<int64_t>(e));
      numel *= static_cast<int64_t>(e);
    }
    std::vector<float> payload(static_cast<size_t>(numel));
    for (int64_t i = 0; i < numel; ++i) {
      payload[static_cast<size_t>(i)] = r.f32();
    }
    t.value = Tensor::from_data(shape, payload);
    tensors.push_back(std::move(t));
  }
  return tensors;
}

}  // namespace qsim
