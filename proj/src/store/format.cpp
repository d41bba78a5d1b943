#include "pinsight/store/format.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pinsight/error.hpp"

namespace pinsight::store {

static_assert(std::endian::native == std::endian::little, "store I/O assumes a little-endian host");

using nlohmann::json;

namespace {

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T get(std::span<const std::uint8_t> bytes, std::size_t& pos, const char* what) {
  if (bytes.size() - pos < sizeof(T)) throw Error(ErrorKind::Truncation, std::string(what) + " ends early");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

void expect_end(std::span<const std::uint8_t> bytes, std::size_t pos, const char* what) {
  if (pos != bytes.size()) throw Error(ErrorKind::CorruptHeader, std::string(what) + " has trailing bytes");
}

void check_payload(std::span<const std::uint8_t> bytes, std::size_t need, const char* what) {
  if (bytes.size() < kHeaderBytes + need) throw Error(ErrorKind::Truncation, std::string(what) + " payload is short");
  expect_end(bytes, kHeaderBytes + need, what);
}

}  // namespace

std::array<std::uint8_t, kHeaderBytes> encode_header(const FileHeader& h) {
  std::array<std::uint8_t, kHeaderBytes> out{};
  const std::uint32_t fields[8] = {h.magic, h.version, h.frames, h.n_sub, h.n_tx, h.n_stream, h.rate_millihz,
                                   h.reserved};
  std::memcpy(out.data(), fields, sizeof(fields));
  return out;
}

FileHeader decode_header(std::span<const std::uint8_t> bytes, std::uint32_t expected_magic) {
  if (bytes.size() < kHeaderBytes) throw Error(ErrorKind::Truncation, "file shorter than its header");
  std::uint32_t f[8];
  std::memcpy(f, bytes.data(), sizeof(f));
  const FileHeader h{f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7]};
  if (h.magic != expected_magic) throw Error(ErrorKind::CorruptHeader, "bad magic");
  if (h.version != kFormatVersion)
    throw Error(ErrorKind::CorruptHeader, "unsupported format version " + std::to_string(h.version));
  if (h.reserved != 0) throw Error(ErrorKind::CorruptHeader, "reserved header field is set");
  return h;
}

std::uint32_t rate_to_millihz(double rate) {
  if (!(rate > 0.0) || rate * 1000.0 > 4e9) throw Error(ErrorKind::InvalidConfig, "sample rate out of range");
  return static_cast<std::uint32_t>(std::lround(rate * 1000.0));
}

std::size_t matrix_payload_bytes(const FileHeader& h) {
  return std::size_t{h.frames} * h.n_sub * h.n_tx * h.n_stream * 2 * sizeof(float);
}

std::vector<std::uint8_t> encode_matrices(std::span<const codec::BfiMatrix> frames, double rate) {
  FileHeader h;
  h.magic = kMagicMatrix;
  h.frames = static_cast<std::uint32_t>(frames.size());
  if (!frames.empty()) {
    h.n_sub = frames[0].n_sub;
    h.n_tx = frames[0].n_tx;
    h.n_stream = frames[0].n_stream;
  }
  h.rate_millihz = rate_to_millihz(rate);
  const auto head = encode_header(h);
  std::vector<std::uint8_t> out(head.begin(), head.end());
  out.reserve(kHeaderBytes + matrix_payload_bytes(h));
  for (const auto& m : frames) {
    if (m.n_sub != static_cast<int>(h.n_sub) || m.n_tx != static_cast<int>(h.n_tx) ||
        m.n_stream != static_cast<int>(h.n_stream))
      throw Error(ErrorKind::ShapeMismatch, "matrices in one trace must share a shape");
    for (const auto& z : m.values) {
      put(out, static_cast<float>(z.real()));
      put(out, static_cast<float>(z.imag()));
    }
  }
  return out;
}

std::vector<codec::BfiMatrix> decode_matrices(std::span<const std::uint8_t> bytes, double* rate) {
  const FileHeader h = decode_header(bytes, kMagicMatrix);
  check_payload(bytes, matrix_payload_bytes(h), "matrix file");
  if (rate) *rate = h.rate_millihz / 1000.0;
  std::vector<codec::BfiMatrix> out;
  out.reserve(h.frames);
  std::size_t pos = kHeaderBytes;
  for (std::uint32_t t = 0; t < h.frames; ++t) {
    codec::BfiMatrix m(h.n_sub, h.n_tx, h.n_stream);
    for (auto& z : m.values) {
      const float re = get<float>(bytes, pos, "matrix file");
      const float im = get<float>(bytes, pos, "matrix file");
      z = {re, im};
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<std::uint8_t> encode_features(const Eigen::MatrixXd& frames, double rate) {
  FileHeader h;
  h.magic = kMagicFeatures;
  h.frames = static_cast<std::uint32_t>(frames.rows());
  h.n_sub = static_cast<std::uint32_t>(frames.cols());
  h.n_tx = 1;
  h.n_stream = 1;
  h.rate_millihz = rate_to_millihz(rate);
  const auto head = encode_header(h);
  std::vector<std::uint8_t> out(head.begin(), head.end());
  for (Eigen::Index t = 0; t < frames.rows(); ++t)
    for (Eigen::Index c = 0; c < frames.cols(); ++c) put(out, static_cast<float>(frames(t, c)));
  return out;
}

Eigen::MatrixXd decode_features(std::span<const std::uint8_t> bytes, double* rate) {
  const FileHeader h = decode_header(bytes, kMagicFeatures);
  if (h.n_tx != 1 || h.n_stream != 1) throw Error(ErrorKind::CorruptHeader, "feature file must be two-dimensional");
  check_payload(bytes, std::size_t{h.frames} * h.n_sub * sizeof(float), "feature file");
  if (rate) *rate = h.rate_millihz / 1000.0;
  Eigen::MatrixXd out(h.frames, h.n_sub);
  std::size_t pos = kHeaderBytes;
  for (Eigen::Index t = 0; t < out.rows(); ++t)
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(t, c) = get<float>(bytes, pos, "feature file");
  return out;
}

std::vector<std::uint8_t> encode_reports(std::span<const codec::AngleReport> reports, double rate) {
  FileHeader h;
  h.magic = kMagicPayload;
  h.frames = static_cast<std::uint32_t>(reports.size());
  codec::StreamConfig cfg;
  codec::Codebook cb;
  if (!reports.empty()) {
    cfg = reports[0].config;
    cb = reports[0].codebook;
  }
  h.n_sub = cfg.n_sub;
  h.n_tx = cfg.n_tx;
  h.n_stream = cfg.n_stream;
  h.rate_millihz = rate_to_millihz(rate);
  const auto head = encode_header(h);
  std::vector<std::uint8_t> out(head.begin(), head.end());
  put<std::uint32_t>(out, cb.bits_phi);
  put<std::uint32_t>(out, cb.bits_psi);
  for (const auto& r : reports) {
    if (!(r.config == cfg) || !(r.codebook == cb))
      throw Error(ErrorKind::ShapeMismatch, "reports in one trace must share stream config and codebook");
    put(out, r.timestamp);
    const auto payload = codec::serialize_payload(r);
    out.insert(out.end(), payload.begin(), payload.end());
  }
  return out;
}

std::vector<codec::AngleReport> decode_reports(std::span<const std::uint8_t> bytes, double* rate) {
  const FileHeader h = decode_header(bytes, kMagicPayload);
  std::size_t pos = kHeaderBytes;
  codec::Codebook cb;
  cb.bits_phi = static_cast<int>(get<std::uint32_t>(bytes, pos, "payload file"));
  cb.bits_psi = static_cast<int>(get<std::uint32_t>(bytes, pos, "payload file"));
  codec::StreamConfig cfg{static_cast<int>(h.n_tx), static_cast<int>(h.n_stream), static_cast<int>(h.n_sub)};
  try {
    cb.validate();
    cfg.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::CorruptHeader, std::string("payload file: ") + e.what());
  }
  const std::size_t size = codec::payload_size(cfg, cb);
  if (rate) *rate = h.rate_millihz / 1000.0;
  std::vector<codec::AngleReport> out;
  out.reserve(h.frames);
  for (std::uint32_t t = 0; t < h.frames; ++t) {
    const double ts = get<double>(bytes, pos, "payload file");
    if (bytes.size() - pos < size) throw Error(ErrorKind::Truncation, "payload file ends early");
    out.push_back(codec::parse_payload(bytes.subspan(pos, size), cfg, cb, ts));
    pos += size;
  }
  expect_end(bytes, pos, "payload file");
  return out;
}

json trace_sidecar(const PinTrace& trace) {
  json j;
  j["format"] = "pinsight-trace";
  j["version"] = kFormatVersion;
  j["id"] = trace.id;
  j["digits"] = trace.digits;
  j["keystrokes"] = trace.keystrokes;
  j["domain"] = trace.domain.str();
  j["sample_rate"] = trace.sample_rate;
  j["scene_seed"] = trace.scene_seed;
  j["plan_seed"] = trace.plan_seed;
  json hp = json::array();
  for (const auto& p : trace.hand_positions) hp.push_back({p.x(), p.y(), p.z()});
  j["hand_positions"] = hp;
  return j;
}

void apply_sidecar(const json& j, PinTrace& trace) {
  try {
    if (j.at("format") != "pinsight-trace" || j.at("version") != kFormatVersion)
      throw Error(ErrorKind::CorruptHeader, "not a version 1 trace sidecar");
    trace.id = j.at("id").get<std::string>();
    trace.digits = j.at("digits").get<std::vector<int>>();
    trace.keystrokes = j.at("keystrokes").get<std::vector<int>>();
    trace.domain = DomainKey::parse(j.at("domain").get<std::string>());
    trace.sample_rate = j.at("sample_rate").get<double>();
    trace.scene_seed = j.at("scene_seed").get<std::uint64_t>();
    trace.plan_seed = j.at("plan_seed").get<std::uint64_t>();
    trace.hand_positions.clear();
    for (const auto& p : j.at("hand_positions"))
      trace.hand_positions.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptHeader, std::string("trace sidecar: ") + e.what());
  }
}

void check_trace_id(const std::string& id) {
  if (id.empty() || id.size() > 200 || id == "." || id == "..")
    throw Error(ErrorKind::InvalidConfig, "invalid trace id '" + id + "'");
  for (char c : id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-'))
      throw Error(ErrorKind::InvalidConfig, "invalid character in trace id '" + id + "'");
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::Io, "read failed: " + path);
  return bytes;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot create " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error(ErrorKind::Io, "cannot rename into " + path);
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace pinsight::store
