#include "oto/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "oto/error.hpp"

namespace oto {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw InvalidArgument(std::string(what) + " exceeds 32-bit range");
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(std::string("truncated checkpoint while reading ") + what,
                        offset_ + static_cast<std::size_t>(in_.gcount()));
    }
    offset_ += n;
  }

  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  std::size_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<ParamArray<float>>& arrays) {
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u32(out, checked_u32(arrays.size(), "array count"));
  for (const auto& a : arrays) {
    put_u32(out, checked_u32(a.name.size(), "name length"));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    put_u32(out, checked_u32(a.value.rank(), "rank"));
    for (auto e : a.value.shape()) put_u32(out, checked_u32(e, "extent"));
    for (float v : a.value.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw Error("failed writing checkpoint");
}

void save_checkpoint(const std::string& path, const ModelGraph& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_checkpoint(out, model.arrays());
}

std::vector<ParamArray<float>> read_checkpoint(std::istream& in) {
  Reader r(in);
  char magic[8];
  r.bytes(magic, 8, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw FormatError("bad checkpoint magic", 0);
  const std::uint32_t count = r.u32("array count");
  std::vector<ParamArray<float>> arrays;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32("name length");
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "name");
    const std::size_t rank_at = r.offset();
    const std::uint32_t rank = r.u32("rank");
    if (rank > 16) throw FormatError("implausible rank " + std::to_string(rank), rank_at);
    Shape shape(rank);
    for (auto& e : shape) {
      const std::size_t at = r.offset();
      e = r.u32("extent");
      if (e == 0) throw FormatError("zero extent in array '" + name + "'", at);
    }
    std::vector<float> data(element_count(shape));
    for (auto& v : data) v = std::bit_cast<float>(r.u32("payload"));
    arrays.push_back({std::move(name), Tensor(std::move(shape), std::move(data)), true});
  }
  return arrays;
}

std::vector<ParamArray<float>> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace oto
