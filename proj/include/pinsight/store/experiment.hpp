#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace pinsight::store {

inline constexpr const char* kToolkitVersion = "0.3.0";

/// `key = value` lines; '#' starts a comment. Keys may use '-' or '_'
/// interchangeably and are stored with '-'.
using FlatConfig = std::map<std::string, std::string>;
FlatConfig parse_flat_config(std::string_view text);
FlatConfig load_flat_config(const std::string& path);

/// $PINSIGHT_OUT when set and non-empty, otherwise ".".
std::string output_root();
/// Relative paths resolve against output_root(); absolute paths are kept.
std::string resolve_output(const std::string& path);

/// One CLI run: what was asked for and digests of what it produced.
struct ExperimentManifest {
  std::string command;
  std::vector<std::string> args;  // argv after the program name, config expanded
  nlohmann::json settings;        // resolved options, seeds included
  nlohmann::json outputs;         // path -> sha256
  std::string version = kToolkitVersion;

  nlohmann::json to_json() const;
  static ExperimentManifest from_json(const nlohmann::json& j);
};

/// sha256 of every regular file under each path, keyed by path relative to the output root.
nlohmann::json digest_outputs(const std::vector<std::string>& paths);

/// Appends one line to <root>/experiments.jsonl under an exclusive lock.
void append_experiment(const std::string& root, const ExperimentManifest& m);
std::vector<ExperimentManifest> read_experiments(const std::string& root);

}  // namespace pinsight::store
