#include "pinsight/eval/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <sstream>

#include "pinsight/attacks/samples.hpp"
#include "pinsight/error.hpp"

namespace pinsight::eval {

using nlohmann::json;

std::string to_string(Method m) {
  switch (m) {
    case Method::WindTalker: return "windtalker";
    case Method::Wink: return "wink";
    case Method::Model: return "model";
  }
  return "windtalker";
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::WindTalker, Method::Wink, Method::Model})
    if (to_string(m) == s) return m;
  throw Error(ErrorKind::InvalidConfig, "unknown method '" + s + "'");
}

json EvalOptions::to_json() const {
  json j;
  j["method"] = to_string(method);
  j["window"] = window;
  j["resample"] = featurize.resample;
  j["per_digit_duration"] = featurize.per_digit_duration;
  j["policy"] = prep::to_string(featurize.policy);
  j["normalize"] = featurize.normalize == prep::NormalizeMethod::Division ? "division" : "subtraction";
  j["timing_sigma"] = featurize.timing_sigma;
  j["featurize_seed"] = featurize.seed;
  j["aggregation"] = attacks::to_string(aggregation);
  j["model"] = model.to_json();
  j["wink_alpha"] = wink.alpha;
  j["tie"] = to_string(tie);
  j["val_fraction"] = val_fraction;
  j["seed"] = seed;
  return j;
}

const TestReport& EvalReport::test(const std::string& name) const {
  for (const auto& t : tests)
    if (t.name == name) return t;
  throw Error(ErrorKind::InvalidConfig, "report has no test '" + name + "'");
}

namespace {

void finish(TestReport& t) {
  long hits = 0, correct = 0, total = 0;
  for (long r : t.ranks) hits += r <= 100 ? 1 : 0;
  for (int d = 0; d < 10; ++d) {
    long row = 0;
    for (int p = 0; p < 10; ++p) row += t.confusion[d][p];
    t.per_digit_accuracy[d] = row ? static_cast<double>(t.confusion[d][d]) / static_cast<double>(row) : 0.0;
    correct += t.confusion[d][d];
    total += row;
  }
  t.traces = static_cast<int>(t.ranks.size());
  t.top100 = t.ranks.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(t.ranks.size());
  t.digit_accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

Ensemble ensemble_of(const std::vector<double>& v) {
  Ensemble e;
  e.members = static_cast<int>(v.size());
  if (v.empty()) return e;
  for (double x : v) e.mean += x;
  e.mean /= static_cast<double>(v.size());
  for (double x : v) e.std += (x - e.mean) * (x - e.mean);
  e.std = std::sqrt(e.std / static_cast<double>(v.size()));
  return e;
}

using TraceRefs = std::vector<const features::TraceFeatures*>;

struct Fitted {
  Method method;
  attacks::TemplateBank bank;
  attacks::DigitClassifier model;
  double val_accuracy = -1.0;
};

Fitted fit(const TraceRefs& train, const EvalOptions& options) {
  Fitted f;
  f.method = options.method;
  if (options.method == Method::Wink) return f;
  std::vector<attacks::Sample> samples;
  for (const auto* t : train) {
    auto s = attacks::make_samples(*t, options.window);
    samples.insert(samples.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  if (samples.empty()) throw Error(ErrorKind::EmptySplit, "no training traces");
  if (options.method == Method::WindTalker) {
    f.bank = attacks::windtalker_fit(samples, options.aggregation);
    return f;
  }
  std::vector<int> labels;
  for (const auto& s : samples) labels.push_back(s.digit);
  const auto split = stratified_split(labels, options.val_fraction, options.seed);
  std::vector<attacks::Sample> tr, va;
  for (int i : split.train) tr.push_back(samples[i]);
  for (int i : split.val) va.push_back(samples[i]);
  auto cfg = options.model;
  cfg.seed = mix_seed(options.seed, cfg.seed);
  auto result = attacks::model_train(tr, va, cfg);
  f.model = std::move(result.model);
  f.val_accuracy = result.best_val_accuracy;
  return f;
}

void score_trace(const Fitted& f, const features::TraceFeatures& t, const EvalOptions& options, TestReport& out) {
  if (t.digits.size() != 6) throw Error(ErrorKind::InvalidConfig, "trace " + t.id + " is not a 6-digit PIN");
  std::array<int, 6> predicted{};
  long rank = 0;
  if (f.method == Method::Wink) {
    const auto ev = attacks::wink_evidence(t);
    const auto scores = attacks::wink_scores(ev, options.wink, options.parallel);
    attacks::Pin truth{};
    std::copy(t.digits.begin(), t.digits.end(), truth.begin());
    const double ts = scores[attacks::pin_index(truth)];
    long count = 0;
    int best = 0;
    for (int i = 0; i < attacks::kPinCount; ++i) {
      const double s = scores[i];
      count += options.tie == TieRule::StrictlyBetter ? (s > ts + kTieTolerance) : (s >= ts - kTieTolerance);
      if (s > scores[best]) best = i;
    }
    rank = options.tie == TieRule::StrictlyBetter ? count + 1 : count;
    predicted = attacks::pin_from_index(best);
  } else {
    const auto samples = attacks::make_samples(t, options.window);
    const std::vector<attacks::DigitProbs> grid =
        f.method == Method::WindTalker ? attacks::windtalker_predict_trace(samples, f.bank, options.parallel)
                                       : attacks::model_predict(f.model, samples);
    std::vector<DigitRow> rows(grid.begin(), grid.end());
    rank = rank_beam(rows, t.digits, options.tie, 100).rank;
    for (int i = 0; i < 6; ++i)
      predicted[i] = static_cast<int>(std::max_element(grid[i].begin(), grid[i].end()) - grid[i].begin());
  }
  out.ranks.push_back(rank);
  for (int i = 0; i < 6; ++i) ++out.confusion[t.digits[i]][predicted[i]];
}

std::map<DomainKey, TraceRefs> by_domain(std::span<const features::TraceFeatures> dataset) {
  std::map<DomainKey, TraceRefs> m;
  for (const auto& t : dataset) m[t.domain].push_back(&t);
  return m;
}

TraceRefs collect(const std::map<DomainKey, TraceRefs>& index, const std::vector<DomainKey>& domains) {
  TraceRefs out;
  for (const auto& d : domains) {
    auto it = index.find(d);
    if (it == index.end() || it->second.empty())
      throw Error(ErrorKind::InsufficientCoverage, "no traces for domain " + d.str());
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

TestReport run_test(const std::string& name, const Fitted& f, const TraceRefs& traces, const EvalOptions& options) {
  TestReport t;
  t.name = name;
  for (const auto* tr : traces) score_trace(f, *tr, options, t);
  finish(t);
  return t;
}

}  // namespace

void EvalReport::validate() const {
  for (const auto& t : tests) {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(t.top100) || !in01(t.digit_accuracy))
      throw Error(ErrorKind::InvalidConfig, "rate outside [0,1] in test " + t.name);
    long total = 0;
    for (const auto& row : t.confusion)
      for (long c : row) total += c;
    if (total != 6L * t.traces) throw Error(ErrorKind::InvalidConfig, "confusion total mismatch in test " + t.name);
    if (static_cast<int>(t.ranks.size()) != t.traces) throw Error(ErrorKind::InvalidConfig, "rank count mismatch");
  }
}

json EvalReport::to_json() const {
  json j;
  j["method"] = method;
  j["split"] = split;
  j["label"] = label;
  j["val_accuracy"] = val_accuracy;
  j["skipped"] = skipped;
  j["tests"] = json::array();
  for (const auto& t : tests) {
    json jt;
    jt["name"] = t.name;
    jt["traces"] = t.traces;
    jt["top100"] = t.top100;
    jt["digit_accuracy"] = t.digit_accuracy;
    jt["per_digit_accuracy"] = t.per_digit_accuracy;
    jt["confusion"] = t.confusion;
    jt["ranks"] = t.ranks;
    j["tests"].push_back(jt);
  }
  for (const auto& [name, e] : ensemble) j["ensemble"][name] = {{"mean", e.mean}, {"std", e.std}, {"members", e.members}};
  return j;
}

std::string EvalReport::confusion_csv(const std::string& name) const {
  const auto& t = test(name);
  std::ostringstream os;
  os << "true\\pred";
  for (int p = 0; p < 10; ++p) os << ',' << p;
  os << '\n';
  for (int d = 0; d < 10; ++d) {
    os << d;
    for (int p = 0; p < 10; ++p) os << ',' << t.confusion[d][p];
    os << '\n';
  }
  return os.str();
}

std::string EvalReport::table() const {
  std::ostringstream os;
  os << method << ' ' << split << (label.empty() ? "" : " [" + label + "]") << '\n';
  os << std::left << std::setw(12) << "test" << std::right << std::setw(8) << "traces" << std::setw(10) << "top100"
     << std::setw(10) << "digit" << std::setw(16) << "ensemble" << '\n';
  os << std::fixed << std::setprecision(3);
  for (const auto& t : tests) {
    os << std::left << std::setw(12) << t.name << std::right << std::setw(8) << t.traces << std::setw(10) << t.top100
       << std::setw(10) << t.digit_accuracy;
    auto it = ensemble.find(t.name);
    if (it != ensemble.end()) {
      std::ostringstream e;
      e << std::fixed << std::setprecision(3) << it->second.mean << "+-" << it->second.std;
      os << std::setw(16) << e.str();
    }
    os << '\n';
  }
  if (val_accuracy >= 0) os << "validation accuracy " << val_accuracy << '\n';
  if (skipped) os << "skipped traces " << skipped << '\n';
  return os.str();
}

std::vector<features::TraceFeatures> featurize_dataset(std::span<const PinTrace> traces,
                                                       const features::FeaturizeOptions& options, bool parallel,
                                                       int* skipped) {
  const long n = static_cast<long>(traces.size());
  std::vector<features::TraceFeatures> out(traces.size());
  std::vector<char> keep(traces.size(), 1);
  std::vector<std::exception_ptr> errors(traces.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (long i = 0; i < n; ++i) {
    try {
      out[i] = features::featurize(traces[i], options);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::PolicyUnsatisfiable) {
        keep[i] = 0;
      } else {
        errors[i] = std::current_exception();
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<features::TraceFeatures> kept;
  for (long i = 0; i < n; ++i)
    if (keep[i]) kept.push_back(std::move(out[i]));
  if (skipped) *skipped = static_cast<int>(n - static_cast<long>(kept.size()));
  return kept;
}

EvalReport evaluate(std::span<const features::TraceFeatures> dataset, const SplitPlan& plan,
                    const EvalOptions& options) {
  const auto index = by_domain(dataset);
  const auto train = collect(index, plan.train);
  const auto f0 = collect(index, plan.first[0]);
  const auto f1 = collect(index, plan.first[1]);
  const auto second = collect(index, plan.second);

  EvalOptions opt = options;
  opt.val_fraction = plan.val_fraction;
  const Fitted fitted = fit(train, opt);

  EvalReport r;
  r.method = to_string(options.method);
  const auto factors = held_out_factors(plan.spec.id);
  r.split = to_string(plan.spec.id) + "(" + std::to_string(plan.spec.unseen[0]) + "," +
            std::to_string(plan.spec.unseen[1]) + ")";
  r.tests.push_back(run_test(to_string(factors[0]), fitted, f0, opt));
  r.tests.push_back(run_test(to_string(factors[1]), fitted, f1, opt));
  r.tests.push_back(run_test("second", fitted, second, opt));
  for (const auto& t : r.tests) r.ensemble[t.name] = ensemble_of({t.top100});
  r.val_accuracy = fitted.val_accuracy;
  r.validate();
  return r;
}

EvalReport evaluate_ensemble(std::span<const features::TraceFeatures> dataset, std::span<const SplitPlan> plans,
                             const EvalOptions& options) {
  if (plans.empty()) throw Error(ErrorKind::InvalidConfig, "no leave-out instances");
  const long n = static_cast<long>(plans.size());
  std::vector<EvalReport> members(plans.size());
  std::vector<std::exception_ptr> errors(plans.size());
#pragma omp parallel for schedule(dynamic) if (options.parallel)
  for (long i = 0; i < n; ++i) {
    try {
      members[i] = evaluate(dataset, plans[i], options);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  EvalReport r;
  r.method = members.front().method;
  r.split = to_string(plans.front().spec.id) + (n > 1 ? "x" + std::to_string(n) : "");
  std::map<std::string, std::vector<double>> rates;
  double val = 0.0;
  for (const auto& m : members) {
    for (const auto& t : m.tests) {
      auto it = std::find_if(r.tests.begin(), r.tests.end(), [&](const TestReport& x) { return x.name == t.name; });
      if (it == r.tests.end()) {
        r.tests.push_back(TestReport{});
        it = std::prev(r.tests.end());
        it->name = t.name;
      }
      it->ranks.insert(it->ranks.end(), t.ranks.begin(), t.ranks.end());
      for (int d = 0; d < 10; ++d)
        for (int p = 0; p < 10; ++p) it->confusion[d][p] += t.confusion[d][p];
      rates[t.name].push_back(t.top100);
    }
    val += m.val_accuracy;
  }
  for (auto& t : r.tests) finish(t);
  for (const auto& [name, v] : rates) r.ensemble[name] = ensemble_of(v);
  r.val_accuracy = val / static_cast<double>(n);
  r.validate();
  return r;
}

EvalReport evaluate_in_domain(std::span<const features::TraceFeatures> dataset, const EvalOptions& options) {
  if (dataset.empty()) throw Error(ErrorKind::InsufficientCoverage, "empty dataset");
  TraceRefs all;
  for (const auto& t : dataset) all.push_back(&t);
  const Fitted fitted = fit(all, options);
  EvalReport r;
  r.method = to_string(options.method);
  r.split = "in_domain";
  r.tests.push_back(run_test("in_domain", fitted, all, options));
  r.ensemble["in_domain"] = ensemble_of({r.tests.back().top100});
  r.val_accuracy = fitted.val_accuracy;
  r.validate();
  return r;
}

std::string to_string(AblationKind k) {
  switch (k) {
    case AblationKind::Timing: return "timing";
    case AblationKind::Window: return "window";
    case AblationKind::DaMethod: return "da_method";
    case AblationKind::Reference: return "reference";
    case AblationKind::DomainDef: return "domain_def";
  }
  return "timing";
}

AblationKind parse_ablation(const std::string& s) {
  for (AblationKind k : {AblationKind::Timing, AblationKind::Window, AblationKind::DaMethod, AblationKind::Reference,
                         AblationKind::DomainDef})
    if (to_string(k) == s) return k;
  throw Error(ErrorKind::InvalidConfig, "unknown ablation '" + s + "'");
}

std::vector<std::string> default_values(AblationKind k) {
  switch (k) {
    case AblationKind::Timing: return {"sigma0", "sigma3", "uniform"};
    case AblationKind::Window: return {"0", "10", "20", "40"};
    case AblationKind::DaMethod: return {"none", "dann", "mmd", "contrastive"};
    case AblationKind::Reference: return {"random", "first", "hand_far", "leaky_digit5"};
    case AblationKind::DomainDef: return {"physical", "context", "both"};
  }
  return {};
}

EvalOptions apply_ablation(const EvalOptions& base, AblationKind kind, const std::string& value) {
  EvalOptions o = base;
  switch (kind) {
    case AblationKind::Timing:
      if (value == "uniform") {
        o.featurize.resample = true;
        o.featurize.timing_sigma = 0.0;
      } else if (value.rfind("sigma", 0) == 0) {
        o.featurize.resample = false;
        try {
          o.featurize.timing_sigma = std::stod(value.substr(5));
        } catch (const std::exception&) {
          throw Error(ErrorKind::InvalidConfig, "bad timing setting '" + value + "'");
        }
        if (o.featurize.timing_sigma < 0) throw Error(ErrorKind::InvalidConfig, "negative timing sigma");
      } else {
        throw Error(ErrorKind::InvalidConfig, "bad timing setting '" + value + "'");
      }
      break;
    case AblationKind::Window:
      try {
        o.window = std::stoi(value);
      } catch (const std::exception&) {
        throw Error(ErrorKind::InvalidConfig, "bad window '" + value + "'");
      }
      break;
    case AblationKind::DaMethod:
      o.method = Method::Model;
      o.model.da_method = attacks::parse_da_method(value);
      if ((o.model.da_method == attacks::DaMethod::Dann || o.model.da_method == attacks::DaMethod::Mmd) &&
          o.model.domain_def == attacks::DomainDef::None)
        o.model.domain_def = attacks::DomainDef::Physical;
      break;
    case AblationKind::Reference:
      o.featurize.policy = prep::parse_policy(value);
      break;
    case AblationKind::DomainDef:
      o.method = Method::Model;
      o.model.domain_def = attacks::parse_domain_def(value);
      if (o.model.da_method == attacks::DaMethod::None) o.model.da_method = attacks::DaMethod::Dann;
      break;
  }
  return o;
}

std::vector<EvalReport> run_ablation(std::span<const PinTrace> traces, std::span<const SplitPlan> plans,
                                     const EvalOptions& base, AblationKind kind, std::vector<std::string> values) {
  if (values.empty()) values = default_values(kind);
  std::vector<EvalReport> out;
  for (const auto& v : values) {
    const EvalOptions o = apply_ablation(base, kind, v);
    int skipped = 0;
    const auto tfs = featurize_dataset(traces, o.featurize, o.parallel, &skipped);
    EvalReport r = plans.empty() ? evaluate_in_domain(tfs, o) : evaluate_ensemble(tfs, plans, o);
    r.label = to_string(kind) + "=" + v;
    r.skipped = skipped;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace pinsight::eval
