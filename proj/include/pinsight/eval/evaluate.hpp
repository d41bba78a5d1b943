#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "pinsight/attacks/model.hpp"
#include "pinsight/attacks/windtalker.hpp"
#include "pinsight/attacks/wink.hpp"
#include "pinsight/eval/splits.hpp"
#include "pinsight/eval/top100.hpp"
#include "pinsight/features.hpp"

namespace pinsight::eval {

enum class Method { WindTalker, Wink, Model };
std::string to_string(Method m);
Method parse_method(const std::string& s);

struct EvalOptions {
  Method method = Method::WindTalker;
  int window = 20;  // W: rows on each side of a keystroke
  features::FeaturizeOptions featurize;
  attacks::Aggregation aggregation = attacks::Aggregation::Min;
  attacks::ModelConfig model = attacks::easy_preset();
  attacks::WinkConfig wink;
  TieRule tie = TieRule::StrictlyBetter;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  bool parallel = true;

  nlohmann::json to_json() const;
};

using Confusion = std::array<std::array<long, 10>, 10>;  // [true][predicted]

struct TestReport {
  std::string name;  // held-out factor, "second", or "in_domain"
  int traces = 0;
  double top100 = 0.0;
  double digit_accuracy = 0.0;
  std::array<double, 10> per_digit_accuracy{};
  Confusion confusion{};
  std::vector<long> ranks;  // true-PIN rank per trace
};

struct Ensemble {
  double mean = 0.0;
  double std = 0.0;
  int members = 0;
};

struct EvalReport {
  std::string method;
  std::string split;
  std::string label;  // ablation setting, empty for plain runs
  std::vector<TestReport> tests;
  std::map<std::string, Ensemble> ensemble;  // Top-100 rate per test name
  double val_accuracy = -1.0;                // learned model only
  int skipped = 0;                           // traces an unsatisfiable reference policy dropped

  const TestReport& test(const std::string& name) const;
  /// Rates in [0,1]; confusion rows sum to the per-digit test counts.
  void validate() const;
  nlohmann::json to_json() const;
  std::string confusion_csv(const std::string& test) const;
  std::string table() const;
};

/// Featurizes every trace; traces that an unsatisfiable reference policy
/// rejects are dropped and counted instead of aborting the run.
std::vector<features::TraceFeatures> featurize_dataset(std::span<const PinTrace> traces,
                                                       const features::FeaturizeOptions& options, bool parallel,
                                                       int* skipped = nullptr);

/// One leave-out instance. Throws InsufficientCoverage when a domain of the
/// plan has no traces.
EvalReport evaluate(std::span<const features::TraceFeatures> dataset, const SplitPlan& plan,
                    const EvalOptions& options);

/// Instances may run in parallel; members are merged in instance order.
EvalReport evaluate_ensemble(std::span<const features::TraceFeatures> dataset, std::span<const SplitPlan> plans,
                             const EvalOptions& options);

/// Fits on every trace and tests on the same traces.
EvalReport evaluate_in_domain(std::span<const features::TraceFeatures> dataset, const EvalOptions& options);

enum class AblationKind { Timing, Window, DaMethod, Reference, DomainDef };
std::string to_string(AblationKind k);
AblationKind parse_ablation(const std::string& s);
std::vector<std::string> default_values(AblationKind k);

/// Applies one ablation setting to a copy of `base`.
EvalOptions apply_ablation(const EvalOptions& base, AblationKind kind, const std::string& value);

/// One report per value, each featurized and evaluated from the raw traces.
/// With no plans the run is in-domain.
std::vector<EvalReport> run_ablation(std::span<const PinTrace> traces, std::span<const SplitPlan> plans,
                                     const EvalOptions& base, AblationKind kind,
                                     std::vector<std::string> values = {});

}  // namespace pinsight::eval
