#include "pinsight/store/dataset.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

#include "pinsight/error.hpp"
#include "pinsight/store/format.hpp"

namespace pinsight::store {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::Io, "SHA-256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 15]);
  }
  return out;
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sha256_file(const std::string& path) { return sha256_hex(read_file(path)); }

DirLock::DirLock(const std::string& dir, const std::string& name) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir + ": " + ec.message());
  const std::string path = (fs::path(dir) / name).string();
  fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorKind::Io, "cannot open lock file " + path);
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorKind::Io, dir + " is locked by another writer");
  }
}

DirLock::~DirLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

std::string DatasetManifest::compute_digest() const {
  json listing = json::array();
  for (const auto& t : traces)
    for (const auto& f : t.files) listing.push_back({f.name, f.size, f.sha256});
  return sha256_hex(listing.dump());
}

json DatasetManifest::to_json() const {
  json j;
  j["format"] = "pinsight-dataset";
  j["version"] = version;
  j["digest"] = digest;
  j["feature_contract"] = feature_contract;
  j["grid"] = grid;
  j["generator"] = generator;
  j["features"] = features;
  json ts = json::array();
  for (const auto& t : traces) {
    json files = json::array();
    for (const auto& f : t.files) files.push_back({{"name", f.name}, {"size", f.size}, {"sha256", f.sha256}});
    ts.push_back({{"id", t.id}, {"domain", t.domain}, {"files", files}});
  }
  j["traces"] = ts;
  return j;
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  DatasetManifest m;
  try {
    if (j.at("format") != "pinsight-dataset") throw Error(ErrorKind::CorruptHeader, "not a dataset manifest");
    m.version = j.at("version").get<int>();
    if (m.version != 1) throw Error(ErrorKind::CorruptHeader, "unsupported manifest version");
    m.digest = j.at("digest").get<std::string>();
    m.feature_contract = j.at("feature_contract").get<std::string>();
    m.grid = j.at("grid");
    m.generator = j.at("generator");
    m.features = j.at("features");
    for (const auto& t : j.at("traces")) {
      TraceEntry e;
      e.id = t.at("id").get<std::string>();
      e.domain = t.at("domain").get<std::string>();
      for (const auto& f : t.at("files"))
        e.files.push_back({f.at("name").get<std::string>(), f.at("size").get<std::uint64_t>(),
                           f.at("sha256").get<std::string>()});
      m.traces.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptHeader, std::string("manifest: ") + e.what());
  }
  return m;
}

std::string contract_hex() {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(features::contract_hash()));
  return buf;
}

namespace {

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

FileEntry put_file(const std::string& dir, const std::string& name, std::span<const std::uint8_t> bytes) {
  write_file(join(dir, name), bytes);
  return {name, bytes.size(), sha256_hex(bytes)};
}

std::vector<std::uint8_t> text_bytes(const std::string& s) { return {s.begin(), s.end()}; }

TraceEntry write_trace(const std::string& dir, const PinTrace& t) {
  check_trace_id(t.id);
  t.validate();
  TraceEntry e;
  e.id = t.id;
  e.domain = t.domain.str();
  e.files.push_back(put_file(dir, t.id + ".bfi", encode_reports(t.reports, t.sample_rate)));
  e.files.push_back(put_file(dir, t.id + ".json", text_bytes(trace_sidecar(t).dump(2) + "\n")));
  e.files.push_back(put_file(dir, t.id + ".mat", encode_matrices(t.matrices, t.sample_rate)));
  std::sort(e.files.begin(), e.files.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return e;
}

json grid_of(const std::vector<TraceEntry>& traces) {
  std::set<int> rooms, positions, channels, reflectors;
  for (const auto& t : traces) {
    const auto k = DomainKey::parse(t.domain);
    rooms.insert(k.room);
    positions.insert(k.position);
    channels.insert(k.channel);
    reflectors.insert(k.reflector);
  }
  return {{"rooms", rooms}, {"positions", positions}, {"channels", channels}, {"reflectors", reflectors}};
}

void save_manifest(const std::string& dir, DatasetManifest& m) {
  std::sort(m.traces.begin(), m.traces.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  m.grid = grid_of(m.traces);
  m.feature_contract = contract_hex();
  m.digest = m.compute_digest();
  write_text(join(dir, "manifest.json"), m.to_json().dump(2) + "\n");
}

bool is_feature_file(const std::string& name) {
  return name.ends_with(".feat") || name.ends_with(".feat.json");
}

}  // namespace

DatasetManifest write_dataset(const std::string& dir, std::span<const PinTrace> traces, const json& generator) {
  DirLock lock(dir);
  std::vector<fs::path> stale;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (!name.starts_with(".")) stale.push_back(entry.path());
  }
  if (!stale.empty() && !fs::exists(join(dir, "manifest.json")))
    throw Error(ErrorKind::Io, dir + " is not empty and holds no dataset");
  for (const auto& p : stale) fs::remove_all(p);

  std::set<std::string> ids;
  DatasetManifest m;
  m.generator = generator;
  for (const auto& t : traces) {
    if (!ids.insert(t.id).second) throw Error(ErrorKind::InvalidConfig, "duplicate trace id " + t.id);
    m.traces.push_back(write_trace(dir, t));
  }
  save_manifest(dir, m);
  return m;
}

DatasetManifest append_traces(const std::string& dir, std::span<const PinTrace> traces, const json& generator) {
  DirLock lock(dir);
  DatasetManifest m;
  if (fs::exists(join(dir, "manifest.json"))) m = read_manifest(dir);
  std::set<std::string> ids;
  for (const auto& t : m.traces) ids.insert(t.id);
  for (const auto& t : traces)
    if (!ids.insert(t.id).second) throw Error(ErrorKind::InvalidConfig, "trace id already present: " + t.id);
  for (const auto& t : traces) m.traces.push_back(write_trace(dir, t));
  if (!m.generator.is_array()) m.generator = m.generator.is_null() ? json::array() : json::array({m.generator});
  m.generator.push_back(generator);
  save_manifest(dir, m);
  return m;
}

DatasetManifest read_manifest(const std::string& dir) {
  const auto bytes = read_file(join(dir, "manifest.json"));
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptHeader, std::string("manifest: ") + e.what());
  }
  return DatasetManifest::from_json(j);
}

PinTrace load_trace(const std::string& dir, const std::string& id) {
  check_trace_id(id);
  PinTrace t;
  const auto side = read_file(join(dir, id + ".json"));
  try {
    apply_sidecar(json::parse(side.begin(), side.end()), t);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptHeader, std::string("trace sidecar: ") + e.what());
  }
  double rate_bfi = 0.0, rate_mat = 0.0;
  t.reports = decode_reports(read_file(join(dir, id + ".bfi")), &rate_bfi);
  t.matrices = decode_matrices(read_file(join(dir, id + ".mat")), &rate_mat);
  if (rate_bfi != rate_mat || rate_to_millihz(t.sample_rate) != rate_to_millihz(rate_mat))
    throw Error(ErrorKind::CorruptHeader, "sample rates of " + id + " disagree");
  t.validate();
  return t;
}

std::vector<PinTrace> load_dataset(const std::string& dir) {
  const auto m = read_manifest(dir);
  std::vector<PinTrace> out;
  out.reserve(m.traces.size());
  for (const auto& e : m.traces) out.push_back(load_trace(dir, e.id));
  return out;
}

DatasetManifest write_features(const std::string& dir, std::span<const features::TraceFeatures> tfs,
                               const json& options) {
  DirLock lock(dir);
  DatasetManifest m = read_manifest(dir);
  std::map<std::string, const features::TraceFeatures*> by_id;
  for (const auto& tf : tfs) by_id[tf.id] = &tf;
  for (auto& e : m.traces) {
    std::erase_if(e.files, [](const FileEntry& f) { return is_feature_file(f.name); });
    for (const char* ext : {".feat", ".feat.json"}) fs::remove(join(dir, e.id + ext));
    auto it = by_id.find(e.id);
    if (it == by_id.end()) continue;
    const auto& tf = *it->second;
    e.files.push_back(put_file(dir, e.id + ".feat", encode_features(tf.series.frames, tf.sample_rate)));
    const json meta = {{"keystrokes", tf.keystrokes}, {"ref_index", tf.series.ref_index}};
    e.files.push_back(put_file(dir, e.id + ".feat.json", text_bytes(meta.dump(2) + "\n")));
    std::sort(e.files.begin(), e.files.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    by_id.erase(it);
  }
  if (!by_id.empty()) throw Error(ErrorKind::InvalidConfig, "features for unknown trace " + by_id.begin()->first);
  m.features = options;
  save_manifest(dir, m);
  return m;
}

std::vector<features::TraceFeatures> load_features(const std::string& dir) {
  const auto m = read_manifest(dir);
  if (m.features.is_null()) throw Error(ErrorKind::InsufficientCoverage, dir + " has no features; run `features`");
  if (m.feature_contract != contract_hex())
    throw Error(ErrorKind::CorruptHeader, "feature contract of " + dir + " differs from this build");
  std::vector<features::TraceFeatures> out;
  for (const auto& e : m.traces) {
    const bool has = std::any_of(e.files.begin(), e.files.end(), [](const auto& f) { return f.name.ends_with(".feat"); });
    if (!has) continue;
    PinTrace t;
    const auto side = read_file(join(dir, e.id + ".json"));
    const auto meta_bytes = read_file(join(dir, e.id + ".feat.json"));
    features::TraceFeatures tf;
    try {
      apply_sidecar(json::parse(side.begin(), side.end()), t);
      const json meta = json::parse(meta_bytes.begin(), meta_bytes.end());
      tf.keystrokes = meta.at("keystrokes").get<std::vector<int>>();
      tf.series.ref_index = meta.at("ref_index").get<int>();
    } catch (const json::exception& ex) {
      throw Error(ErrorKind::CorruptHeader, "feature sidecar of " + e.id + ": " + ex.what());
    }
    tf.id = t.id;
    tf.domain = t.domain;
    tf.digits = t.digits;
    tf.series.frames = decode_features(read_file(join(dir, e.id + ".feat")), &tf.sample_rate);
    if (tf.series.frames.cols() != features::kFeatureWidth)
      throw Error(ErrorKind::CorruptHeader, "feature file of " + e.id + " is not 134 columns wide");
    out.push_back(std::move(tf));
  }
  return out;
}

std::vector<std::string> verify_dataset(const std::string& dir) {
  std::vector<std::string> problems;
  DatasetManifest m;
  try {
    m = read_manifest(dir);
  } catch (const Error& e) {
    return {e.what()};
  }
  if (m.digest != m.compute_digest()) problems.push_back("manifest digest does not match its file list");
  if (m.feature_contract != contract_hex()) problems.push_back("feature contract hash differs from this build");

  std::set<std::string> listed = {"manifest.json"};
  for (const auto& e : m.traces) {
    for (const auto& f : e.files) {
      listed.insert(f.name);
      const std::string path = join(dir, f.name);
      if (!fs::exists(path)) {
        problems.push_back("missing file " + f.name);
        continue;
      }
      if (fs::file_size(path) != f.size) problems.push_back("size mismatch for " + f.name);
      if (sha256_file(path) != f.sha256) problems.push_back("checksum mismatch for " + f.name);
    }
    try {
      const PinTrace t = load_trace(dir, e.id);
      if (t.domain.str() != e.domain) problems.push_back("domain of " + e.id + " differs from the manifest");
      double worst = 0.0;
      for (std::size_t i = 0; i < t.reports.size(); ++i) {
        const auto v = codec::decompress(t.reports[i]);
        for (std::size_t k = 0; k < v.values.size(); ++k)
          worst = std::max(worst, std::abs(v.values[k] - t.matrices[i].values[k]));
      }
      if (worst > 1e-6) problems.push_back("matrices of " + e.id + " do not match their payloads");
    } catch (const Error& err) {
      problems.push_back(e.id + ": " + err.what());
    }
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (!name.starts_with(".") && !listed.count(name)) problems.push_back("unlisted file " + name);
  }
  return problems;
}

}  // namespace pinsight::store
