#include "pinsight/learncore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pinsight/error.hpp"

namespace pinsight::learn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'P', 'S', 'C', 'K'};

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void put_str(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes(b) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string get_str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
  void need(std::size_t n) const {
    if (bytes.size() - pos < n) throw Error(ErrorKind::Truncation, "checkpoint ends early");
  }
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.out.insert(w.out.end(), kMagic, kMagic + 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.params.items().size()));
  for (const auto& [name, t] : ck.params.items()) {
    w.put_str(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : t.values) w.put<double>(v);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.scalars.size()));
  for (const auto& [name, v] : ck.scalars) {
    w.put_str(name);
    w.put<double>(v);
  }
  w.put<std::uint64_t>(ck.config_json.size());
  w.out.insert(w.out.end(), ck.config_json.begin(), ck.config_json.end());
  return w.out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8) throw Error(ErrorKind::Truncation, "checkpoint header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error(ErrorKind::CorruptHeader, "bad checkpoint magic");
  Reader r(bytes);
  r.pos = 4;
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::CorruptHeader, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const auto n_tensors = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::string name = r.get_str(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw Error(ErrorKind::CorruptHeader, "tensor rank " + std::to_string(rank));
    std::vector<int> shape;
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<int>(r.get<std::uint32_t>()));
      n *= static_cast<std::size_t>(shape.back());
    }
    r.need(n * sizeof(double));
    Tensor& t = ck.params.add(name, shape);
    for (auto& v : t.values) v = r.get<double>();
  }
  const auto n_scalars = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_scalars; ++i) {
    const std::string name = r.get_str(r.get<std::uint32_t>());
    ck.scalars[name] = r.get<double>();
  }
  ck.config_json = r.get_str(static_cast<std::size_t>(r.get<std::uint64_t>()));
  if (r.pos != bytes.size()) throw Error(ErrorKind::CorruptHeader, "trailing bytes after checkpoint");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto bytes = encode_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace pinsight::learn
