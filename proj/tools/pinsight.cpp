// pinsight command-line driver. Exit codes: 0 success, 2 usage or
// configuration error, 3 data error, 4 invariant-suite failure. Failures
// print one JSON object on stderr.

#include <omp.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "invariants.hpp"
#include "pinsight/attacks/model.hpp"
#include "pinsight/attacks/samples.hpp"
#include "pinsight/attacks/windtalker.hpp"
#include "pinsight/attacks/wink.hpp"
#include "pinsight/error.hpp"
#include "pinsight/eval/dataset.hpp"
#include "pinsight/eval/evaluate.hpp"
#include "pinsight/eval/splits.hpp"
#include "pinsight/eval/top100.hpp"
#include "pinsight/store/dataset.hpp"
#include "pinsight/store/experiment.hpp"
#include "pinsight/store/format.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pinsight;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInvariant = 4;

struct InvariantFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Everything any subcommand can be asked for. Strings are parsed late so that
// bad values surface as configuration errors with a useful message.
struct Options {
  int threads = 0;
  std::string config;

  std::string out;
  std::string data;
  std::string rooms = "2";
  std::string positions = "2";
  std::string channels = "44";
  std::string reflectors = "0";
  int pins = 20;
  std::uint64_t seed = 0;
  std::string snr_db = "inf";
  std::string codebook = "9/7";

  std::string input;
  std::string labels;

  std::string policy = "random";
  bool raw_timing = false;
  double per_digit_duration = 0.8;
  double timing_sigma = 0.0;
  std::string normalize = "division";

  std::string method = "windtalker";
  std::string split;
  std::string unseen;
  std::string instances = "all";
  int window = 20;
  std::string aggregation = "min";
  std::string da = "none";
  std::string domain_def = "none";
  std::string preset = "easy";
  int epochs = 0;
  double val_fraction = 0.2;
  std::string tie = "strictly_better";
  std::string model;
  std::string trace;
  int top = 10;
  std::string ablation;
  std::string values;

  std::string id;
  bool as_json = false;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

int to_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::InvalidConfig, "bad " + what + " '" + s + "'");
}

// A bare number is a count of instances starting from the first; a comma list names them.
std::vector<int> instances_of(const std::string& s, eval::Factor f) {
  const auto full = eval::GridSlice::full().instances(f);
  if (s.find(',') == std::string::npos && f != eval::Factor::Channel && f != eval::Factor::Reflector) {
    const int n = to_int(s, eval::to_string(f) + " count");
    if (n < 1 || n > static_cast<int>(full.size()))
      throw Error(ErrorKind::InvalidConfig, eval::to_string(f) + " count out of range");
    return {full.begin(), full.begin() + n};
  }
  std::vector<int> out;
  for (const auto& item : split_list(s)) out.push_back(to_int(item, eval::to_string(f)));
  return out;
}

eval::GridSlice grid_from(const Options& o) {
  eval::GridSlice g;
  g.rooms = instances_of(o.rooms, eval::Factor::Room);
  g.positions = instances_of(o.positions, eval::Factor::Position);
  g.channels = instances_of(o.channels, eval::Factor::Channel);
  g.reflectors = instances_of(o.reflectors, eval::Factor::Reflector);
  g.validate();
  return g;
}

eval::GridSlice grid_of_dataset(const std::string& dir) {
  const auto m = store::read_manifest(dir);
  eval::GridSlice g;
  g.rooms = m.grid.at("rooms").get<std::vector<int>>();
  g.positions = m.grid.at("positions").get<std::vector<int>>();
  g.channels = m.grid.at("channels").get<std::vector<int>>();
  g.reflectors = m.grid.at("reflectors").get<std::vector<int>>();
  return g;
}

codec::Codebook parse_codebook(const std::string& s) {
  const auto slash = s.find('/');
  if (slash == std::string::npos) throw Error(ErrorKind::InvalidConfig, "codebook must look like 9/7");
  codec::Codebook cb{to_int(s.substr(0, slash), "codebook"), to_int(s.substr(slash + 1), "codebook")};
  cb.validate();
  return cb;
}

double parse_snr(const std::string& s) {
  if (s == "inf" || s == "none") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::InvalidConfig, "bad snr-db '" + s + "'");
}

features::FeaturizeOptions featurize_options(const Options& o) {
  features::FeaturizeOptions f;
  f.resample = !o.raw_timing;
  f.per_digit_duration = o.per_digit_duration;
  f.policy = prep::parse_policy(o.policy);
  f.normalize = prep::parse_normalize(o.normalize);
  f.timing_sigma = o.timing_sigma;
  f.seed = o.seed;
  if (f.timing_sigma < 0) throw Error(ErrorKind::InvalidConfig, "timing-sigma must be non-negative");
  return f;
}

json featurize_json(const features::FeaturizeOptions& f) {
  return {{"resample", f.resample},
          {"per_digit_duration", f.per_digit_duration},
          {"policy", prep::to_string(f.policy)},
          {"normalize", std::string(prep::to_string(f.normalize))},
          {"timing_sigma", f.timing_sigma},
          {"seed", f.seed}};
}

eval::EvalOptions eval_options(const Options& o) {
  eval::EvalOptions e;
  e.method = eval::parse_method(o.method);
  e.window = o.window;
  e.featurize = featurize_options(o);
  e.aggregation = attacks::parse_aggregation(o.aggregation);
  if (o.preset == "easy") {
    e.model = attacks::easy_preset();
  } else if (o.preset == "default") {
    e.model = attacks::ModelConfig{};
  } else {
    throw Error(ErrorKind::InvalidConfig, "preset must be easy or default");
  }
  e.model.da_method = attacks::parse_da_method(o.da);
  e.model.domain_def = attacks::parse_domain_def(o.domain_def);
  if ((e.model.da_method == attacks::DaMethod::Dann || e.model.da_method == attacks::DaMethod::Mmd) &&
      e.model.domain_def == attacks::DomainDef::None)
    e.model.domain_def = attacks::DomainDef::Physical;
  if (o.epochs > 0) e.model.epochs = o.epochs;
  e.model.seed = o.seed;
  e.model.validate();
  e.tie = eval::parse_tie_rule(o.tie);
  e.val_fraction = o.val_fraction;
  e.seed = o.seed;
  e.parallel = o.threads != 1;
  if (e.window < 0 || e.window > 40) throw Error(ErrorKind::InvalidConfig, "window must be in [0, 40]");
  return e;
}

std::vector<eval::SplitPlan> plans_from(const Options& o, const eval::GridSlice& grid, double val_fraction) {
  const auto id = eval::parse_split_id(o.split);
  std::vector<eval::SplitSpec> specs;
  if (!o.unseen.empty()) {
    const auto parts = split_list(o.unseen);
    if (parts.size() != 2) throw Error(ErrorKind::InvalidConfig, "unseen takes two instances, e.g. 1,0");
    specs.push_back({id, {to_int(parts[0], "instance"), to_int(parts[1], "instance")}});
  } else if (o.instances == "all") {
    specs = eval::all_instances(id, grid);
  } else if (o.instances == "first") {
    specs = {eval::all_instances(id, grid).front()};
  } else {
    throw Error(ErrorKind::InvalidConfig, "instances must be all or first");
  }
  std::vector<eval::SplitPlan> plans;
  for (const auto& s : specs) {
    auto p = eval::make_splits(s, grid);
    p.val_fraction = val_fraction;
    plans.push_back(std::move(p));
  }
  return plans;
}

void write_report(const std::string& dir, const eval::EvalReport& r, const std::string& prefix) {
  fs::create_directories(dir);
  store::write_text((fs::path(dir) / (prefix + "report.json")).string(), r.to_json().dump(2) + "\n");
  store::write_text((fs::path(dir) / (prefix + "table.txt")).string(), r.table());
  for (const auto& t : r.tests)
    store::write_text((fs::path(dir) / (prefix + "confusion_" + t.name + ".csv")).string(), r.confusion_csv(t.name));
}

std::string pin_string(std::span<const int> digits) {
  std::string s;
  for (int d : digits) s += static_cast<char>('0' + d);
  return s;
}

// ---- subcommands --------------------------------------------------------

json cmd_simulate(const Options& o, std::vector<std::string>& outputs) {
  if (o.out.empty()) throw Error(ErrorKind::InvalidConfig, "--out is required");
  eval::SimSpec spec;
  spec.grid = grid_from(o);
  spec.pins_per_domain = o.pins;
  spec.seed = o.seed;
  spec.snr_db = parse_snr(o.snr_db);
  spec.codebook = parse_codebook(o.codebook);
  const auto traces = eval::simulate(spec, o.threads != 1);
  const auto dir = store::resolve_output(o.out);
  const auto m = store::write_dataset(dir, traces, spec.to_json());
  outputs.push_back(dir);
  std::cout << "wrote " << m.traces.size() << " traces to " << dir << "\ndigest " << m.digest << "\n";
  return spec.to_json();
}

json cmd_ingest(const Options& o, std::vector<std::string>& outputs) {
  if (o.input.empty() || o.labels.empty() || o.data.empty())
    throw Error(ErrorKind::InvalidConfig, "ingest needs --input, --labels and --data");
  std::ifstream in(o.input);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + o.input);
  PinTrace t;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      t.reports.push_back(codec::from_sidecar_line(line));
    } catch (const Error& e) {
      throw Error(e.kind(), "line " + std::to_string(number) + ": " + e.what());
    }
  }
  for (const auto& r : t.reports) t.matrices.push_back(codec::decompress(r));
  const auto label_bytes = store::read_file(o.labels);
  try {
    const json j = json::parse(label_bytes.begin(), label_bytes.end());
    t.id = j.at("id").get<std::string>();
    t.digits = j.at("digits").get<std::vector<int>>();
    t.keystrokes = j.at("keystrokes").get<std::vector<int>>();
    t.domain = DomainKey::parse(j.at("domain").get<std::string>());
    t.sample_rate = j.value("sample_rate", 18.0);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptHeader, std::string("labels: ") + e.what());
  }
  store::check_trace_id(t.id);
  t.validate();
  const auto dir = store::resolve_output(o.data);
  const json record = {{"kind", "ingest"}, {"input", fs::path(o.input).filename().string()},
                       {"input_sha256", store::sha256_file(o.input)}, {"trace", t.id}};
  const auto m = store::append_traces(dir, std::vector<PinTrace>{t}, record);
  outputs.push_back(dir);
  std::cout << "ingested " << t.id << " (" << t.reports.size() << " reports); dataset now has " << m.traces.size()
            << " traces\n";
  return record;
}

json cmd_features(const Options& o, std::vector<std::string>& outputs) {
  if (o.data.empty()) throw Error(ErrorKind::InvalidConfig, "--data is required");
  const auto dir = store::resolve_output(o.data);
  const auto f = featurize_options(o);
  const auto traces = store::load_dataset(dir);
  int skipped = 0;
  const auto tfs = eval::featurize_dataset(traces, f, o.threads != 1, &skipped);
  json settings = featurize_json(f);
  settings["skipped"] = skipped;
  store::write_features(dir, tfs, settings);
  outputs.push_back(dir);
  std::cout << "featurized " << tfs.size() << " traces";
  if (skipped) std::cout << ", skipped " << skipped << " the reference policy could not serve";
  std::cout << "\n";
  return settings;
}

std::vector<attacks::Sample> samples_of(std::span<const features::TraceFeatures> tfs, int window) {
  std::vector<attacks::Sample> out;
  for (const auto& t : tfs) {
    auto s = attacks::make_samples(t, window);
    out.insert(out.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  return out;
}

json cmd_train(const Options& o, std::vector<std::string>& outputs) {
  if (o.data.empty() || o.out.empty()) throw Error(ErrorKind::InvalidConfig, "train needs --data and --out");
  const auto dir = store::resolve_output(o.data);
  const auto e = eval_options(o);
  auto tfs = store::load_features(dir);
  if (!o.split.empty()) {
    const auto plans = plans_from(o, grid_of_dataset(dir), e.val_fraction);
    const std::set<DomainKey> seen(plans.front().train.begin(), plans.front().train.end());
    std::erase_if(tfs, [&](const auto& t) { return !seen.count(t.domain); });
  }
  const auto samples = samples_of(tfs, e.window);
  if (samples.empty()) throw Error(ErrorKind::EmptySplit, "no training traces");
  learn::Checkpoint ck;
  json settings = e.to_json();
  if (e.method == eval::Method::WindTalker) {
    ck = attacks::bank_to_checkpoint(attacks::windtalker_fit(samples, e.aggregation));
  } else if (e.method == eval::Method::Model) {
    std::vector<int> labels;
    for (const auto& s : samples) labels.push_back(s.digit);
    const auto split = eval::stratified_split(labels, e.val_fraction, e.seed);
    std::vector<attacks::Sample> tr, va;
    for (int i : split.train) tr.push_back(samples[i]);
    for (int i : split.val) va.push_back(samples[i]);
    const auto result = attacks::model_train(tr, va, e.model);
    for (const auto& ep : result.log)
      std::cout << "epoch " << std::setw(3) << ep.epoch << "  loss " << std::fixed << std::setprecision(4)
                << ep.total_loss << "  digit " << ep.digit_loss << "  val " << ep.val_accuracy << "\n";
    std::cout << "best epoch " << result.best_epoch << ", validation accuracy " << result.best_val_accuracy << "\n";
    ck = result.model.to_checkpoint();
    ck.scalars["best_epoch"] = result.best_epoch;
    ck.scalars["best_val_accuracy"] = result.best_val_accuracy;
    settings["best_val_accuracy"] = result.best_val_accuracy;
  } else {
    throw Error(ErrorKind::InvalidConfig, "wink needs no training");
  }
  const auto path = store::resolve_output(o.out);
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  learn::save_checkpoint(path, ck);
  outputs.push_back(path);
  std::cout << "saved " << path << " (" << samples.size() << " training windows)\n";
  return settings;
}

json cmd_attack(const Options& o, std::vector<std::string>& outputs) {
  if (o.data.empty()) throw Error(ErrorKind::InvalidConfig, "--data is required");
  const auto dir = store::resolve_output(o.data);
  const auto method = eval::parse_method(o.method);
  const auto tie = eval::parse_tie_rule(o.tie);
  auto tfs = store::load_features(dir);
  if (!o.trace.empty()) {
    std::erase_if(tfs, [&](const auto& t) { return t.id != o.trace; });
    if (tfs.empty()) throw Error(ErrorKind::InvalidConfig, "no featurized trace " + o.trace);
  }
  if (o.top < 1 || o.top > 1000) throw Error(ErrorKind::InvalidConfig, "top must be in [1, 1000]");

  attacks::TemplateBank bank;
  attacks::DigitClassifier model;
  int window = o.window;
  if (method != eval::Method::Wink) {
    if (o.model.empty()) throw Error(ErrorKind::InvalidConfig, "--model is required for " + o.method);
    const auto ck = learn::load_checkpoint(store::resolve_output(o.model));
    if (method == eval::Method::WindTalker) {
      bank = attacks::bank_from_checkpoint(ck);
      window = (bank.rows - 1) / 2;
    } else {
      model = attacks::DigitClassifier::from_checkpoint(ck);
      window = (model.rows - 1) / 2;
    }
  }

  json results = json::array();
  for (const auto& t : tfs) {
    json r = {{"id", t.id}, {"truth", pin_string(t.digits)}};
    json cands = json::array();
    if (method == eval::Method::Wink) {
      attacks::WinkConfig cfg;
      const auto ev = attacks::wink_evidence(t);
      const auto scores = attacks::wink_scores(ev, cfg, o.threads != 1);
      attacks::Pin truth{};
      std::copy(t.digits.begin(), t.digits.end(), truth.begin());
      const double ts = scores[attacks::pin_index(truth)];
      long count = 0;
      for (double s : scores)
        count += tie == eval::TieRule::StrictlyBetter ? (s > ts + eval::kTieTolerance) : (s >= ts - eval::kTieTolerance);
      r["rank"] = tie == eval::TieRule::StrictlyBetter ? count + 1 : count;
      for (const auto& c : attacks::wink_rank(ev, cfg, o.top, o.threads != 1)) {
        const auto pin = attacks::pin_from_index(c.index);
        cands.push_back({{"pin", pin_string(pin)}, {"score", c.score}});
      }
    } else {
      const auto samples = attacks::make_samples(t, window);
      const auto grid = method == eval::Method::WindTalker
                            ? attacks::windtalker_predict_trace(samples, bank, o.threads != 1)
                            : attacks::model_predict(model, samples);
      const std::vector<eval::DigitRow> rows(grid.begin(), grid.end());
      r["rank"] = eval::rank_beam(rows, t.digits, tie, 100).rank;
      for (const auto& c : eval::top_k_candidates(rows, o.top))
        cands.push_back({{"pin", pin_string(c.digits)}, {"log_score", c.score}});
    }
    r["candidates"] = cands;
    std::cout << t.id << "  truth " << pin_string(t.digits) << "  rank " << r["rank"].get<long>() << "  best "
              << cands.front()["pin"].get<std::string>() << "\n";
    results.push_back(r);
  }
  if (!o.out.empty()) {
    const auto path = store::resolve_output(o.out);
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    store::write_text(path, results.dump(2) + "\n");
    outputs.push_back(path);
  }
  return {{"method", o.method}, {"tie", o.tie}, {"top", o.top}, {"window", window}};
}

json cmd_evaluate(const Options& o, std::vector<std::string>& outputs) {
  if (o.data.empty() || o.out.empty()) throw Error(ErrorKind::InvalidConfig, "evaluate needs --data and --out");
  const auto dir = store::resolve_output(o.data);
  const auto out = store::resolve_output(o.out);
  const auto e = eval_options(o);
  std::vector<eval::SplitPlan> plans;
  if (!o.split.empty() && o.split != "in_domain") plans = plans_from(o, grid_of_dataset(dir), e.val_fraction);

  json settings = e.to_json();
  settings["split"] = o.split.empty() ? "in_domain" : o.split;
  settings["instances"] = plans.size();
  if (!o.ablation.empty()) {
    const auto kind = eval::parse_ablation(o.ablation);
    const auto traces = store::load_dataset(dir);
    const auto reports = eval::run_ablation(traces, plans, e, kind, split_list(o.values));
    json all = json::array();
    for (const auto& r : reports) {
      std::cout << r.table() << "\n";
      std::string prefix = r.label;
      std::replace(prefix.begin(), prefix.end(), '=', '_');
      write_report(out, r, prefix + "_");
      all.push_back(r.to_json());
    }
    store::write_text((fs::path(out) / "ablation.json").string(), all.dump(2) + "\n");
    settings["ablation"] = o.ablation;
    settings["values"] = o.values;
  } else {
    const auto tfs = store::load_features(dir);
    const auto r = plans.empty() ? eval::evaluate_in_domain(tfs, e) : eval::evaluate_ensemble(tfs, plans, e);
    std::cout << r.table();
    write_report(out, r, "");
  }
  outputs.push_back(out);
  return settings;
}

json cmd_splits(const Options& o) {
  const auto grid = o.data.empty() ? eval::GridSlice::full() : grid_of_dataset(store::resolve_output(o.data));
  std::vector<eval::SplitId> ids;
  if (o.id.empty()) {
    ids = {eval::SplitId::RP, eval::SplitId::RW, eval::SplitId::RA, eval::SplitId::AP};
  } else {
    ids = {eval::parse_split_id(o.id)};
  }
  json rows = json::array();
  if (!o.as_json)
    std::cout << std::left << std::setw(6) << "split" << std::setw(20) << "held out" << std::right << std::setw(6)
              << "seen" << std::setw(9) << "first_a" << std::setw(9) << "first_b" << std::setw(8) << "second"
              << std::setw(11) << "instances" << "\n";
  for (auto id : ids) {
    const auto f = eval::held_out_factors(id);
    const auto specs = eval::all_instances(id, grid);
    const auto p = eval::make_splits(specs.front(), grid);
    const std::string held = eval::to_string(f[0]) + "+" + eval::to_string(f[1]);
    rows.push_back({{"id", eval::to_string(id)}, {"held_out", held}, {"seen", p.train.size()},
                    {"first", {p.first[0].size(), p.first[1].size()}}, {"second", p.second.size()},
                    {"instances", specs.size()}});
    if (!o.as_json)
      std::cout << std::left << std::setw(6) << eval::to_string(id) << std::setw(20) << held << std::right
                << std::setw(6) << p.train.size() << std::setw(9) << p.first[0].size() << std::setw(9)
                << p.first[1].size() << std::setw(8) << p.second.size() << std::setw(11) << specs.size() << "\n";
  }
  if (o.as_json) std::cout << rows.dump(2) << "\n";
  return {{"ids", rows}};
}

json cmd_verify(const Options& o) {
  const auto results = tools::run_invariants(o.data.empty() ? std::string() : store::resolve_output(o.data));
  bool ok = true;
  json j = json::array();
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << (r.detail.empty() ? "" : "  " + r.detail) << "\n";
    ok &= r.passed;
    j.push_back({{"name", r.name}, {"passed", r.passed}});
  }
  if (!ok) throw InvariantFailure("invariant suite failed");
  return {{"checks", j}};
}

// ---- driver ----------------------------------------------------------------

void fail(int code, const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}, {"exit", code}}.dump() << "\n";
}

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::InvalidInstance:
      return kExitUsage;
    default:
      return kExitData;
  }
}

std::string config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].starts_with("--config=")) return args[i].substr(9);
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"pinsight: keystroke inference experiments on Wi-Fi beamforming feedback"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", o.config, "flat key=value file; command-line flags win");
  app.add_option("--threads", o.threads, "OpenMP threads; 1 runs every kernel serially")->check(CLI::NonNegativeNumber);

  auto* simulate = app.add_subcommand("simulate", "render a synthetic dataset over a domain grid");
  simulate->add_option("--out", o.out, "dataset directory");
  simulate->add_option("--rooms", o.rooms, "room count or comma list");
  simulate->add_option("--positions", o.positions, "router position count or comma list");
  simulate->add_option("--channels", o.channels, "comma list of Wi-Fi channels");
  simulate->add_option("--reflectors", o.reflectors, "comma list of reflector angles");
  simulate->add_option("--pins", o.pins, "PINs per domain")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", o.seed);
  simulate->add_option("--snr-db", o.snr_db, "noise level, or inf for none");
  simulate->add_option("--codebook", o.codebook, "phi/psi bits, one of 4/2 6/4 7/5 9/7");

  auto* ingest = app.add_subcommand("ingest", "add one captured trace from sidecar JSONL");
  ingest->add_option("--input", o.input, "JSONL, one report per line");
  ingest->add_option("--labels", o.labels, "JSON with id, digits, keystrokes, domain, sample_rate");
  ingest->add_option("--data", o.data, "dataset directory");

  auto* feats = app.add_subcommand("features", "materialize feature series for a dataset");
  auto add_featurize = [&](CLI::App* s) {
    s->add_option("--policy", o.policy, "reference policy: random, first, hand_far, leaky_digit5");
    s->add_flag("--raw-timing", o.raw_timing, "skip the uniform keystroke resampling");
    s->add_option("--per-digit-duration", o.per_digit_duration);
    s->add_option("--timing-sigma", o.timing_sigma, "keystroke label jitter in samples");
    s->add_option("--normalize", o.normalize, "division or subtraction");
  };
  feats->add_option("--data", o.data);
  feats->add_option("--seed", o.seed);
  add_featurize(feats);

  auto add_model = [&](CLI::App* s) {
    s->add_option("--data", o.data);
    s->add_option("--out", o.out);
    s->add_option("--method", o.method, "windtalker, model or wink");
    s->add_option("--split", o.split, "RP, RW, RA, AP or in_domain");
    s->add_option("--unseen", o.unseen, "held-out instances, e.g. 1,0");
    s->add_option("--window", o.window, "rows on each side of a keystroke");
    s->add_option("--aggregation", o.aggregation, "min or mean template distance");
    s->add_option("--da", o.da, "none, dann, mmd or contrastive");
    s->add_option("--domain-def", o.domain_def, "none, physical, context or both");
    s->add_option("--preset", o.preset, "easy or default network");
    s->add_option("--epochs", o.epochs);
    s->add_option("--val-fraction", o.val_fraction);
    s->add_option("--tie", o.tie, "strictly_better or better_or_equal");
    s->add_option("--seed", o.seed);
  };
  auto* train = app.add_subcommand("train", "fit templates or the learned model and save a checkpoint");
  add_model(train);
  auto* attack = app.add_subcommand("attack", "rank PIN candidates for featurized traces");
  add_model(attack);
  attack->add_option("--model", o.model, "checkpoint from train");
  attack->add_option("--trace", o.trace, "only this trace id");
  attack->add_option("--top", o.top, "candidates to list");
  auto* evaluate = app.add_subcommand("evaluate", "leave-out evaluation, ensembles and ablations");
  add_model(evaluate);
  add_featurize(evaluate);
  evaluate->add_option("--instances", o.instances, "all or first leave-out combination");
  evaluate->add_option("--ablation", o.ablation, "timing, window, da_method, reference or domain_def");
  evaluate->add_option("--values", o.values, "comma list of ablation settings");

  auto* splits = app.add_subcommand("splits", "print the leave-out split table");
  splits->add_option("--id", o.id, "RP, RW, RA or AP");
  splits->add_option("--data", o.data, "use this dataset's grid instead of the full one");
  splits->add_flag("--json", o.as_json);

  auto* verify = app.add_subcommand("verify", "run the invariant suite");
  verify->add_option("--data", o.data, "also check this dataset against its manifest");

  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> ignored;
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
    if (const auto cfg = config_path(args); !cfg.empty()) {
      const auto kv = store::load_flat_config(cfg);
      CLI::App* sub = app.get_subcommands().front();
      for (const auto& [k, v] : kv) {
        CLI::Option* opt = sub->get_option_no_throw("--" + k);
        if (!opt) opt = app.get_option_no_throw("--" + k);
        if (!opt || k == "config") {
          ignored.push_back(k);
        } else if (opt->count() == 0) {
          args.push_back("--" + k + "=" + v);
        }
      }
      app.clear();
      std::vector<std::string> again(args.rbegin(), args.rend());
      app.parse(again);
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail(kExitUsage, "usage", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    fail(exit_code_for(e.kind()), std::string(to_string(e.kind())), e.what());
    return exit_code_for(e.kind());
  }
  if (o.threads > 0) omp_set_num_threads(o.threads);

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  std::vector<std::string> outputs;
  try {
    json settings;
    if (sub == simulate) settings = cmd_simulate(o, outputs);
    else if (sub == ingest) settings = cmd_ingest(o, outputs);
    else if (sub == feats) settings = cmd_features(o, outputs);
    else if (sub == train) settings = cmd_train(o, outputs);
    else if (sub == attack) settings = cmd_attack(o, outputs);
    else if (sub == evaluate) settings = cmd_evaluate(o, outputs);
    else if (sub == splits) settings = cmd_splits(o);
    else settings = cmd_verify(o);
    if (!ignored.empty()) settings["ignored_config_keys"] = ignored;
    settings["threads"] = o.threads;

    store::ExperimentManifest m;
    m.command = command;
    m.args = args;
    m.settings = settings;
    m.outputs = store::digest_outputs(outputs);
    store::append_experiment(store::output_root(), m);
  } catch (const InvariantFailure& e) {
    fail(kExitInvariant, "invariant-failure", e.what());
    return kExitInvariant;
  } catch (const Error& e) {
    fail(exit_code_for(e.kind()), std::string(to_string(e.kind())), e.what());
    return exit_code_for(e.kind());
  } catch (const json::exception& e) {
    fail(kExitData, "corrupt-header", e.what());
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    fail(kExitData, "io", e.what());
    return kExitData;
  }
  return 0;
}
