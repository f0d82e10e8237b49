#include "cankd/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "cankd/errors.hpp"

namespace cankd {

namespace {

constexpr std::array<unsigned char, 8> kMagic = {'C', 'A', 'N', 'K', 'D', 0, 0, 1};
constexpr std::uint64_t kCrcPoly = 0x42F0E1EBA9EA3693ull;

const std::array<std::uint64_t, 256>& crc_table() {
  static const std::array<std::uint64_t, 256> table = [] {
    std::array<std::uint64_t, 256> t{};
    for (std::uint64_t i = 0; i < 256; ++i) {
      std::uint64_t crc = i << 56;
      for (int bit = 0; bit < 8; ++bit) {
        crc = (crc & 0x8000000000000000ull) ? (crc << 1) ^ kCrcPoly : crc << 1;
      }
      t[static_cast<std::size_t>(i)] = crc;
    }
    return t;
  }();
  return table;
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<unsigned char>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

// Cursor over the loaded file; every read checks the remaining length and
// reports the current offset on failure.
struct Reader {
  const std::vector<unsigned char>& bytes;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (pos + n > bytes.size()) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what, pos);
    }
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  unsigned char u8(const char* what) {
    need(1, what);
    return bytes[pos++];
  }
};

}  // namespace

std::uint64_t crc64_ecma(const unsigned char* data, std::size_t len) {
  const auto& table = crc_table();
  std::uint64_t crc = 0;
  for (std::size_t i = 0; i < len; ++i) {
    crc = table[static_cast<std::size_t>((crc >> 56) ^ data[i]) & 0xff] ^ (crc << 8);
  }
  return crc;
}

void save_checkpoint(const ParamRefs& params, const std::string& path) {
  std::vector<unsigned char> out;
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    if (p.name.size() > 0xffff) throw IoError("parameter name too long: " + p.name);
    put_u16(out, static_cast<std::uint16_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    const Shape& shape = p.tensor->shape;
    out.push_back(static_cast<unsigned char>(shape.rank()));
    for (int axis = 0; axis < shape.rank(); ++axis) {
      put_u32(out, static_cast<std::uint32_t>(shape.extent(axis)));
    }
    for (double v : p.tensor->values) put_f64(out, v);
  }
  put_u64(out, crc64_ecma(out.data(), out.size()));

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open checkpoint for writing: " + path);
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("short write while saving checkpoint: " + path);
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw CheckpointMissing("checkpoint not found: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(file)),
                                   std::istreambuf_iterator<char>());
  if (file.bad()) throw IoError("read failure on checkpoint: " + path);

  if (bytes.size() < kMagic.size()) {
    throw FormatError("checkpoint shorter than its magic", bytes.size());
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw VersionMismatch("checkpoint magic/version mismatch in " + path);
  }
  if (bytes.size() < kMagic.size() + 8) {
    throw FormatError("checkpoint has no room for its checksum", bytes.size());
  }
  const std::size_t body_len = bytes.size() - 8;
  Reader tail{bytes, body_len};
  const std::uint64_t stored_crc = tail.u64("checksum");
  const std::uint64_t actual_crc = crc64_ecma(bytes.data(), body_len);
  if (stored_crc != actual_crc) {
    throw FormatError("checkpoint checksum mismatch", body_len);
  }

  Reader r{bytes, kMagic.size()};
  const std::uint32_t count = r.u32("tensor count");
  std::vector<std::pair<std::string, Tensor>> result;
  result.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint16_t name_len = r.u16("name length");
    r.need(name_len, "name");
    std::string name(reinterpret_cast<const char*>(bytes.data() + r.pos), name_len);
    r.pos += name_len;
    const unsigned char rank = r.u8("rank");
    if (rank < 1 || rank > 4) {
      throw FormatError("tensor rank " + std::to_string(rank) + " outside 1..4", r.pos - 1);
    }
    std::vector<std::int64_t> dims;
    for (int axis = 0; axis < rank; ++axis) {
      const std::uint32_t e = r.u32("extent");
      if (e == 0) throw FormatError("zero extent", r.pos - 4);
      dims.push_back(static_cast<std::int64_t>(e));
    }
    Shape shape(dims);
    std::vector<double> values(static_cast<std::size_t>(shape.numel()));
    for (double& v : values) {
      v = std::bit_cast<double>(r.u64("tensor values"));
    }
    result.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (r.pos != body_len) {
    throw FormatError("trailing bytes after the last tensor", r.pos);
  }
  return result;
}

void load_checkpoint_into(const std::string& path, const ParamRefs& params) {
  auto loaded = load_checkpoint(path);
  if (loaded.size() != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(loaded.size()) +
                          " tensors, expected " + std::to_string(params.size()),
                      0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (loaded[i].first != params[i].name) {
      throw FormatError("checkpoint tensor '" + loaded[i].first + "' where '" + params[i].name +
                            "' was expected",
                        0);
    }
    if (!(loaded[i].second.shape == params[i].tensor->shape)) {
      throw FormatError("shape mismatch for '" + params[i].name + "': " +
                            loaded[i].second.shape.str() + " vs " + params[i].tensor->shape.str(),
                        0);
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    *params[i].tensor = std::move(loaded[i].second);
  }
}

}  // namespace cankd
