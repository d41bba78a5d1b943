#pragma once

// A dataset directory holds per-trace files plus manifest.json:
//   <id>.bfi        raw angle payloads
//   <id>.mat        decompressed matrices
//   <id>.json       labels and provenance
//   <id>.feat       feature frames, once `features` has run
//   <id>.feat.json  feature keystrokes and reference index
// The manifest lists every file with its size and SHA-256, and its digest is
// the SHA-256 of that listing. Writers hold an exclusive lock on .lock.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "pinsight/features.hpp"
#include "pinsight/trace.hpp"

namespace pinsight::store {

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& text);
std::string sha256_file(const std::string& path);

/// Non-blocking exclusive flock on <dir>/<name>; throws Io when another writer holds it.
class DirLock {
 public:
  explicit DirLock(const std::string& dir, const std::string& name = ".lock");
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  int fd_ = -1;
};

struct FileEntry {
  std::string name;
  std::uint64_t size = 0;
  std::string sha256;
  bool operator==(const FileEntry&) const = default;
};

struct TraceEntry {
  std::string id;
  std::string domain;
  std::vector<FileEntry> files;  // sorted by name
  bool operator==(const TraceEntry&) const = default;
};

struct DatasetManifest {
  int version = 1;
  std::vector<TraceEntry> traces;  // sorted by id
  nlohmann::json grid;             // sorted distinct instances per factor
  std::string feature_contract;    // hex column-contract hash
  nlohmann::json generator;        // simulation spec or ingest record
  nlohmann::json features;         // featurize options, null until features exist
  std::string digest;

  std::string compute_digest() const;
  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

std::string contract_hex();

/// Creates `dir` and writes every trace plus the manifest. An existing
/// dataset in `dir` is replaced.
DatasetManifest write_dataset(const std::string& dir, std::span<const PinTrace> traces,
                              const nlohmann::json& generator);

/// Adds traces to an existing or new dataset; ids must be new.
DatasetManifest append_traces(const std::string& dir, std::span<const PinTrace> traces,
                              const nlohmann::json& generator);

DatasetManifest read_manifest(const std::string& dir);

PinTrace load_trace(const std::string& dir, const std::string& id);
std::vector<PinTrace> load_dataset(const std::string& dir);

/// Writes .feat files for every trace and records the options in the manifest.
DatasetManifest write_features(const std::string& dir, std::span<const features::TraceFeatures> tfs,
                               const nlohmann::json& options);
std::vector<features::TraceFeatures> load_features(const std::string& dir);

/// Problems found while checking files against the manifest; empty when clean.
std::vector<std::string> verify_dataset(const std::string& dir);

}  // namespace pinsight::store
