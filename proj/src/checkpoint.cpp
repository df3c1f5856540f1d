#include "sgr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace sgr {

namespace {

void put_u16(std::vector<unsigned char>& out, uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open checkpoint " + path);
    bytes_.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }

  const unsigned char* take(size_t n, const char* what) {
    if (pos_ + n > bytes_.size())
      throw IngestionError(path_ + ": truncated checkpoint while reading " +
                           std::string(what) + " at byte offset " + std::to_string(pos_));
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  uint16_t u16(const char* what) {
    const unsigned char* p = take(2, what);
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
  }

  uint32_t u32(const char* what) {
    const unsigned char* p = take(4, what);
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
  }

  bool exhausted() const { return pos_ == bytes_.size(); }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::vector<unsigned char> bytes_;
  size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ParamSet<float>& params, const std::string& path) {
  std::vector<unsigned char> out;
  out.insert(out.end(), {'S', 'G', 'R', 'M'});
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<uint32_t>(params.count()));
  for (int64_t i = 0; i < params.count(); ++i) {
    const std::string& name = params.name(i);
    if (name.size() > 0xffff) throw ParameterError("checkpoint: parameter name too long");
    put_u16(out, static_cast<uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    const auto& value = params.value(i);
    if (value.rank() > 0xff) throw ParameterError("checkpoint: rank too large");
    out.push_back(static_cast<unsigned char>(value.rank()));
    for (int a = 0; a < value.rank(); ++a)
      put_u32(out, static_cast<uint32_t>(value.extent(a)));
    for (int64_t c = 0; c < value.size(); ++c) {
      uint32_t bits;
      std::memcpy(&bits, &value[c], 4);
      put_u32(out, bits);
    }
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IngestionError("cannot write checkpoint " + path);
  file.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
  if (!file) throw IngestionError("short write to " + path);
}

ParamSet<float> load_checkpoint(const std::string& path) {
  Reader in(path);
  const unsigned char* magic = in.take(4, "magic");
  if (std::memcmp(magic, "SGRM", 4) != 0)
    throw IngestionError(path + ": magic mismatch, not an SGRM checkpoint");
  const uint32_t version = in.u32("version");
  if (version != kCheckpointVersion)
    throw IngestionError(path + ": unsupported checkpoint version " +
                         std::to_string(version));
  const uint32_t count = in.u32("entry count");
  ParamSet<float> params;
  for (uint32_t e = 0; e < count; ++e) {
    const uint16_t name_len = in.u16("name length");
    const unsigned char* name_bytes = in.take(name_len, "name");
    const std::string name(reinterpret_cast<const char*>(name_bytes), name_len);
    const unsigned char rank = *in.take(1, "rank");
    Shape shape;
    int64_t total = 1;
    for (int a = 0; a < rank; ++a) {
      const uint32_t extent = in.u32("extent");
      if (extent == 0) throw IngestionError(path + ": zero extent in '" + name + "'");
      shape.push_back(static_cast<int64_t>(extent));
      total *= extent;
    }
    std::vector<float> data(static_cast<size_t>(total));
    for (int64_t c = 0; c < total; ++c) {
      const uint32_t bits = in.u32("values");
      std::memcpy(&data[static_cast<size_t>(c)], &bits, 4);
      if (!std::isfinite(data[static_cast<size_t>(c)]))
        throw IngestionError(path + ": non-finite value in '" + name + "'");
    }
    params.add(name, Tensor(std::move(shape), std::move(data)));
  }
  if (!in.exhausted())
    throw IngestionError(path + ": trailing bytes after last entry");
  return params;
}

}  // namespace sgr
