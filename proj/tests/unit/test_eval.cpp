#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "pinsight/error.hpp"
#include "pinsight/eval/dataset.hpp"
#include "pinsight/eval/evaluate.hpp"
#include "pinsight/eval/splits.hpp"
#include "pinsight/eval/top100.hpp"

using namespace pinsight;
using namespace pinsight::eval;

namespace {

std::vector<DigitRow> random_grid(std::mt19937_64& rng, int rows = 6) {
  std::gamma_distribution<double> g(0.3, 1.0);
  std::uniform_int_distribution<int> coarse(0, 3);
  std::vector<DigitRow> grid(rows);
  const bool quantized = coarse(rng) == 0;  // small integer weights produce many exact ties
  for (auto& row : grid) {
    double s = 0.0;
    for (double& p : row) {
      p = quantized ? coarse(rng) + 1.0 : g(rng) + 1e-12;
      s += p;
    }
    for (double& p : row) p /= s;
  }
  return grid;
}

std::vector<int> random_pin(std::mt19937_64& rng, int n = 6) {
  std::uniform_int_distribution<int> d(0, 9);
  std::vector<int> pin(n);
  for (int& x : pin) x = d(rng);
  return pin;
}

GridSlice small_grid() {
  GridSlice g;
  g.rooms = {0, 1};
  g.positions = {0, 1};
  g.channels = {44};
  g.reflectors = {0};
  return g;
}

const std::vector<PinTrace>& small_dataset() {
  static const std::vector<PinTrace> traces = [] {
    SimSpec spec;
    spec.grid = small_grid();
    spec.pins_per_domain = 10;
    spec.seed = 5;
    return simulate(spec);
  }();
  return traces;
}

}  // namespace

TEST_CASE("seen-domain counts for the four splits") {
  const std::pair<SplitId, std::size_t> expected[] = {
      {SplitId::RP, 720}, {SplitId::RW, 675}, {SplitId::RA, 600}, {SplitId::AP, 512}};
  for (const auto& [id, seen] : expected) {
    const auto spec = all_instances(id).front();
    CHECK(make_splits(spec).train.size() == seen);
  }
  CHECK(GridSlice::full().domains().size() == 960);
}

TEST_CASE("splits partition the grid for every instance") {
  const auto full = GridSlice::full().domains();
  const std::set<DomainKey> all(full.begin(), full.end());
  for (SplitId id : {SplitId::RP, SplitId::RW, SplitId::RA, SplitId::AP}) {
    const auto f = held_out_factors(id);
    for (const auto& spec : all_instances(id)) {
      const auto plan = make_splits(spec);
      std::multiset<DomainKey> seen;
      for (const auto* part : {&plan.train, &plan.first[0], &plan.first[1], &plan.second})
        seen.insert(part->begin(), part->end());
      REQUIRE(seen.size() == all.size());
      CHECK(std::set<DomainKey>(seen.begin(), seen.end()) == all);
      for (const auto& d : plan.train) {
        CHECK(factor_value(d, f[0]) != spec.unseen[0]);
        CHECK(factor_value(d, f[1]) != spec.unseen[1]);
      }
      for (const auto& d : plan.first[0]) {
        CHECK(factor_value(d, f[0]) == spec.unseen[0]);
        CHECK(factor_value(d, f[1]) != spec.unseen[1]);
      }
      for (const auto& d : plan.second) {
        CHECK(factor_value(d, f[0]) == spec.unseen[0]);
        CHECK(factor_value(d, f[1]) == spec.unseen[1]);
      }
    }
  }
}

TEST_CASE("split errors") {
  auto kind = [](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;
  };
  CHECK(kind([] { make_splits({SplitId::RP, {16, 0}}); }) == ErrorKind::InvalidInstance);
  CHECK(kind([] { make_splits({SplitId::RW, {0, 45}}); }) == ErrorKind::InvalidInstance);
  CHECK(kind([] { make_splits({SplitId::AP, {30, 0}}); }) == ErrorKind::InvalidInstance);
  CHECK(parse_split_id("RA") == SplitId::RA);
  CHECK_THROWS_AS(parse_split_id("XX"), Error);
}

TEST_CASE("stratified split keeps class proportions") {
  std::vector<int> labels;
  for (int c = 0; c < 10; ++c)
    for (int i = 0; i < 10 + c; ++i) labels.push_back(c);
  const auto s = stratified_split(labels, 0.2, 3);
  CHECK(s.train.size() + s.val.size() == labels.size());
  std::vector<int> per_class(10, 0);
  for (int i : s.val) ++per_class[labels[i]];
  for (int c = 0; c < 10; ++c) CHECK(per_class[c] == std::lround(0.2 * (10 + c)));
  std::vector<int> merged = s.train;
  merged.insert(merged.end(), s.val.begin(), s.val.end());
  std::sort(merged.begin(), merged.end());
  for (int i = 0; i < static_cast<int>(merged.size()); ++i) CHECK(merged[i] == i);
  CHECK(stratified_split(labels, 0.2, 3).val == s.val);
}

TEST_CASE("top100 tagged examples") {
  const std::vector<int> truth = {1, 9, 8, 4, 0, 7};
  std::vector<DigitRow> onehot(6);
  for (int i = 0; i < 6; ++i) onehot[i][truth[i]] = 1.0;
  CHECK(top100(onehot, truth) == RankResult{true, 1});
  CHECK(rank_bruteforce(onehot, truth) == RankResult{true, 1});

  std::vector<DigitRow> uniform(6);
  for (auto& r : uniform) r.fill(0.1);
  CHECK(top100(uniform, truth) == RankResult{true, 1});
  CHECK(top100(uniform, truth, TieRule::BetterOrEqual) == RankResult{false, 1000000});

  std::vector<DigitRow> half(6);
  for (int i = 0; i < 6; ++i) {
    half[i].fill(0.5 / 9);
    half[i][truth[i]] = 0.5;
  }
  CHECK(rank_bruteforce(half, truth) == RankResult{true, 1});
  CHECK(top100(half, truth) == RankResult{true, 1});
  auto off = truth;
  off[2] = 3;
  CHECK(rank_bruteforce(half, off) == RankResult{true, 2});
  CHECK(top100(half, off) == RankResult{true, 2});
  // 54 single-digit-off PINs tie with `off`, so counting ties pushes it to 55.
  CHECK(top100(half, off, TieRule::BetterOrEqual) == RankResult{true, 55});
}

TEST_CASE("beam ranking equals brute force on random grids") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    const auto grid = random_grid(rng);
    auto truth = random_pin(rng);
    if (trial % 3 == 0) {
      for (int i = 0; i < 6; ++i)
        truth[i] = static_cast<int>(std::max_element(grid[i].begin(), grid[i].end()) - grid[i].begin());
      truth[trial % 6] = (truth[trial % 6] + 1) % 10;
    }
    for (TieRule rule : {TieRule::StrictlyBetter, TieRule::BetterOrEqual}) {
      const auto want = rank_bruteforce(grid, truth, rule);
      CHECK(rank_beam(grid, truth, rule) == want);
      CHECK(rank_bruteforce(grid, truth, rule, 100, false) == want);
    }
  }
}

TEST_CASE("beam handles shorter PINs and small k") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + trial % 4;
    const auto grid = random_grid(rng, n);
    const auto truth = random_pin(rng, n);
    const int k = 1 + trial % 7;
    CHECK(rank_beam(grid, truth, TieRule::StrictlyBetter, k) ==
          rank_bruteforce(grid, truth, TieRule::StrictlyBetter, k));
  }
}

TEST_CASE("top-k candidates are the best scores in order") {
  std::mt19937_64 rng(5);
  const auto grid = random_grid(rng, 3);
  const auto best = top_k_candidates(grid, 20);
  REQUIRE(best.size() == 20);
  std::vector<double> all;
  for (int c = 0; c < 1000; ++c) {
    const std::vector<int> pin = {c / 100, c / 10 % 10, c % 10};
    all.push_back(pin_log_score(grid, pin));
  }
  std::sort(all.rbegin(), all.rend());
  for (int i = 0; i < 20; ++i) {
    CHECK(best[i].score == doctest::Approx(all[i]).epsilon(1e-12));
    CHECK(pin_log_score(grid, best[i].digits) == best[i].score);
  }
}

TEST_CASE("hit and rank survive sharpening every row") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const auto grid = random_grid(rng);
    const auto truth = random_pin(rng);
    for (double c : {0.5, 2.0}) {
      auto sharp = grid;
      for (auto& row : sharp) {
        double s = 0.0;
        for (double& p : row) s += (p = std::pow(p, c));
        for (double& p : row) p /= s;
      }
      const auto a = top100(grid, truth), b = top100(sharp, truth);
      CHECK(a.hit == b.hit);
      if (a.rank <= 1000) CHECK(a.rank == b.rank);
    }
  }
}

TEST_CASE("invalid distributions are rejected") {
  std::vector<DigitRow> g(6);
  for (auto& r : g) r.fill(0.1);
  const std::vector<int> truth(6, 0);
  auto bad = g;
  bad[2][0] = 0.2;
  CHECK_THROWS_AS(top100(bad, truth), Error);
  bad = g;
  bad[1][3] = std::nan("");
  try {
    top100(bad, truth);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidDistribution);
  }
  bad = g;
  bad[0][0] = -0.1;
  bad[0][1] = 0.3;
  CHECK_THROWS_AS(rank_bruteforce(bad, truth), Error);
  CHECK_THROWS_AS(top100(std::span(g).first(5), std::span(truth).first(5)), Error);
}

TEST_CASE("balanced pins use every digit evenly") {
  const auto pins = balanced_pins(20, 9);
  std::array<int, 10> counts{};
  for (const auto& p : pins)
    for (int d : p) ++counts[d];
  for (int c : counts) CHECK(c == 12);
  CHECK(balanced_pins(20, 9) == pins);
  CHECK(balanced_pins(20, 10) != pins);
}

TEST_CASE("sim spec json round trip") {
  SimSpec s;
  s.grid = small_grid();
  s.pins_per_domain = 4;
  s.seed = 11;
  const auto back = SimSpec::from_json(s.to_json());
  CHECK(back.to_json() == s.to_json());
  CHECK(std::isinf(back.snr_db));
  s.snr_db = 20.0;
  CHECK(SimSpec::from_json(s.to_json()).snr_db == 20.0);
}

TEST_CASE("windtalker in-domain on the noiseless simulator is exact") {
  const auto& traces = small_dataset();
  REQUIRE(traces.size() == 40);
  EvalOptions opt;
  opt.method = Method::WindTalker;
  const auto tfs = featurize_dataset(traces, opt.featurize, true);
  const auto report = evaluate_in_domain(tfs, opt);
  const auto& t = report.test("in_domain");
  CHECK(t.traces == 40);
  CHECK(t.digit_accuracy == 1.0);
  for (double a : t.per_digit_accuracy) CHECK(a == 1.0);
  CHECK(t.top100 == 1.0);
  CHECK(report.ensemble.at("in_domain").std == 0.0);
}

TEST_CASE("leave-out evaluation reports") {
  const auto& traces = small_dataset();
  EvalOptions opt;
  opt.method = Method::WindTalker;
  const auto tfs = featurize_dataset(traces, opt.featurize, true);
  const auto grid = small_grid();
  const auto plan = make_splits({SplitId::RP, {1, 1}}, grid);

  const auto r = evaluate(tfs, plan, opt);
  REQUIRE(r.tests.size() == 3);
  CHECK(r.tests[0].name == "room");
  CHECK(r.tests[1].name == "position");
  CHECK(r.tests[2].name == "second");
  for (const auto& t : r.tests) {
    CHECK(t.traces == 10);
    std::array<long, 10> truth_counts{};
    for (const auto& tr : tfs)
      if (tr.domain == DomainKey{1, 0, 44, 0} && t.name == "room")
        for (int d : tr.digits) ++truth_counts[d];
    if (t.name == "room")
      for (int d = 0; d < 10; ++d) {
        long row = 0;
        for (long c : t.confusion[d]) row += c;
        CHECK(row == truth_counts[d]);
      }
  }

  const std::vector<SplitPlan> twice = {plan, plan};
  const auto e = evaluate_ensemble(tfs, twice, opt);
  CHECK(e.ensemble.at("second").members == 2);
  CHECK(e.ensemble.at("second").std == 0.0);
  CHECK(e.ensemble.at("second").mean == r.test("second").top100);
  CHECK(e.test("second").traces == 20);

  std::vector<SplitPlan> all;
  for (const auto& s : all_instances(SplitId::RP, grid)) all.push_back(make_splits(s, grid));
  opt.parallel = false;
  const auto serial = evaluate_ensemble(tfs, all, opt);
  opt.parallel = true;
  CHECK(evaluate_ensemble(tfs, all, opt).to_json() == serial.to_json());
  CHECK(serial.confusion_csv("room").find("true\\pred,0,1") == 0);
  CHECK(serial.table().find("second") != std::string::npos);

  const std::vector<features::TraceFeatures> partial(tfs.begin(), tfs.begin() + 10);
  try {
    evaluate(partial, plan, opt);
    FAIL("expected a throw");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::InsufficientCoverage);
  }
}

TEST_CASE("wink evaluation runs without training") {
  const auto& traces = small_dataset();
  EvalOptions opt;
  opt.method = Method::Wink;
  const std::vector<PinTrace> few(traces.begin(), traces.begin() + 4);
  const auto tfs = featurize_dataset(few, opt.featurize, true);
  const auto r = evaluate_in_domain(tfs, opt);
  CHECK(r.test("in_domain").traces == 4);
  for (long rank : r.test("in_domain").ranks) CHECK((rank >= 1 && rank <= 1000000));
  r.validate();
}

TEST_CASE("ablation settings") {
  EvalOptions base;
  auto o = apply_ablation(base, AblationKind::Timing, "sigma3");
  CHECK_FALSE(o.featurize.resample);
  CHECK(o.featurize.timing_sigma == 3.0);
  o = apply_ablation(base, AblationKind::Timing, "uniform");
  CHECK(o.featurize.resample);
  CHECK(o.featurize.timing_sigma == 0.0);
  CHECK(apply_ablation(base, AblationKind::Window, "10").window == 10);
  o = apply_ablation(base, AblationKind::DaMethod, "mmd");
  CHECK(o.method == Method::Model);
  CHECK(o.model.domain_def == attacks::DomainDef::Physical);
  o = apply_ablation(base, AblationKind::DomainDef, "context");
  CHECK(o.model.da_method == attacks::DaMethod::Dann);
  CHECK(apply_ablation(base, AblationKind::Reference, "leaky_digit5").featurize.policy ==
        prep::ReferencePolicy::LeakyDigit5);
  CHECK_THROWS_AS(apply_ablation(base, AblationKind::Timing, "sigmaX"), Error);
  CHECK_THROWS_AS(apply_ablation(base, AblationKind::Window, "wide"), Error);
  CHECK(parse_ablation("da_method") == AblationKind::DaMethod);
}

TEST_CASE("window and reference ablations emit populated reports") {
  const auto& traces = small_dataset();
  EvalOptions base;
  base.method = Method::WindTalker;
  const auto windows = run_ablation(traces, {}, base, AblationKind::Window, {"0", "10"});
  REQUIRE(windows.size() == 2);
  CHECK(windows[0].label == "window=0");
  for (const auto& r : windows) CHECK(r.test("in_domain").traces == 40);

  const auto refs = run_ablation(traces, {}, base, AblationKind::Reference, {"leaky_digit5"});
  REQUIRE(refs.size() == 1);
  CHECK(refs[0].test("in_domain").traces + refs[0].skipped == 40);
}
