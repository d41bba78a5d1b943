#include "pinsight/store/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pinsight/error.hpp"
#include "pinsight/store/dataset.hpp"
#include "pinsight/store/format.hpp"

namespace pinsight::store {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

FlatConfig parse_flat_config(std::string_view text) {
  FlatConfig out;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::InvalidConfig, "config line " + std::to_string(number) + " has no '='");
    std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.empty() || key.find_first_of(" \t") != std::string::npos)
      throw Error(ErrorKind::InvalidConfig, "config line " + std::to_string(number) + " has a bad key");
    if (!out.emplace(key, value).second)
      throw Error(ErrorKind::InvalidConfig, "config key '" + key + "' appears twice");
  }
  return out;
}

FlatConfig load_flat_config(const std::string& path) {
  const auto bytes = read_file(path);
  return parse_flat_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string output_root() {
  const char* env = std::getenv("PINSIGHT_OUT");
  return env && *env ? std::string(env) : std::string(".");
}

std::string resolve_output(const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? path : (fs::path(output_root()) / p).lexically_normal().string();
}

json ExperimentManifest::to_json() const {
  return {{"command", command}, {"args", args}, {"settings", settings}, {"outputs", outputs}, {"version", version}};
}

ExperimentManifest ExperimentManifest::from_json(const json& j) {
  ExperimentManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.args = j.at("args").get<std::vector<std::string>>();
    m.settings = j.at("settings");
    m.outputs = j.at("outputs");
    m.version = j.at("version").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptHeader, std::string("experiment record: ") + e.what());
  }
  return m;
}

json digest_outputs(const std::vector<std::string>& paths) {
  json out = json::object();
  const fs::path root = fs::absolute(output_root()).lexically_normal();
  auto key = [&](const fs::path& p) {
    const auto rel = fs::absolute(p).lexically_normal().lexically_relative(root);
    return rel.empty() || rel.string().starts_with("..") ? p.string() : rel.string();
  };
  for (const auto& path : paths) {
    if (fs::is_directory(path)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(path))
        if (e.is_regular_file() && !e.path().filename().string().starts_with(".")) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) out[key(f)] = sha256_file(f.string());
    } else if (fs::is_regular_file(path)) {
      out[key(path)] = sha256_file(path);
    }
  }
  return out;
}

void append_experiment(const std::string& root, const ExperimentManifest& m) {
  DirLock lock(root, ".experiments.lock");
  std::ofstream out((fs::path(root) / "experiments.jsonl").string(), std::ios::app);
  if (!out) throw Error(ErrorKind::Io, "cannot append to experiments.jsonl in " + root);
  out << m.to_json().dump() << '\n';
  if (!out) throw Error(ErrorKind::Io, "write failed: experiments.jsonl");
}

std::vector<ExperimentManifest> read_experiments(const std::string& root) {
  std::vector<ExperimentManifest> out;
  std::ifstream in((fs::path(root) / "experiments.jsonl").string());
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(ExperimentManifest::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::CorruptHeader, std::string("experiments.jsonl: ") + e.what());
    }
  }
  return out;
}

}  // namespace pinsight::store
