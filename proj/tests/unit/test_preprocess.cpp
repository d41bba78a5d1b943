#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "pinsight/channel_sim.hpp"
#include "pinsight/error.hpp"
#include "pinsight/preprocess.hpp"

using namespace pinsight;
using namespace pinsight::prep;
using codec::BfiMatrix;
using codec::cplx;

namespace {

// Small trace whose single matrix entry at sample t is value(t).
template <class F>
PinTrace toy_trace(int T, std::vector<int> keys, F value) {
  PinTrace tr;
  tr.keystrokes = std::move(keys);
  tr.digits = {2, 5, 4, 5, 1, 9};
  tr.digits.resize(tr.keystrokes.size());
  for (int t = 0; t < T; ++t) {
    BfiMatrix m(1, 2, 1);
    m.values = {value(t), cplx(1.0, -1.0)};
    tr.matrices.push_back(m);
  }
  return tr;
}

std::vector<int> gaps(const std::vector<int>& k) {
  std::vector<int> g;
  for (std::size_t i = 1; i < k.size(); ++i) g.push_back(k[i] - k[i - 1]);
  return g;
}

}  // namespace

TEST_CASE("resample_uniform leaves a uniform trace untouched") {
  auto tr = toy_trace(100, {10, 24, 38, 52, 66, 80}, [](int t) { return cplx(std::sin(t), t); });
  const auto out = resample_uniform(tr, 14);
  CHECK(out.keystrokes == tr.keystrokes);
  REQUIRE(out.length() == tr.length());
  for (int t = 0; t < tr.length(); ++t) CHECK(out.matrices[t].values == tr.matrices[t].values);
}

TEST_CASE("resample_uniform equalizes gaps to the mean") {
  const std::vector<int> keys = {5, 15, 35, 45, 65, 75};  // gaps 10,20,10,20,10
  auto tr = toy_trace(90, keys, [](int t) { return cplx(t, 0); });
  const int mean_gap = static_cast<int>(std::lround((keys.back() - keys.front()) / 5.0));
  CHECK(mean_gap == 14);
  const auto out = resample_uniform(tr, mean_gap);
  CHECK(gaps(out.keystrokes) == std::vector<int>(5, 14));
  CHECK(out.length() == 5 + 70 + 15);
  // The ramp value at each new keystroke is the old keystroke index.
  for (int i = 0; i < 6; ++i)
    CHECK(out.matrices[out.keystrokes[i]].values[0].real() == doctest::Approx(keys[i]));
  // Inside every inter-key piece the warped ramp is affine.
  for (int i = 0; i < 5; ++i) {
    const double slope = static_cast<double>(keys[i + 1] - keys[i]) / 14.0;
    for (int u = out.keystrokes[i]; u < out.keystrokes[i + 1]; ++u)
      CHECK(out.matrices[u + 1].values[0].real() - out.matrices[u].values[0].real() ==
            doctest::Approx(slope));
  }
  // Head and tail keep their spacing.
  for (int u = 0; u <= 5; ++u) CHECK(out.matrices[u].values[0].real() == u);
  CHECK(out.matrices.back().values[0].real() == 89);
}

TEST_CASE("resample_uniform defaults to per-digit duration times rate") {
  auto tr = toy_trace(120, {3, 20, 30, 52, 70, 90}, [](int t) { return cplx(t, 1); });
  tr.sample_rate = 18;
  CHECK(gaps(resample_uniform(tr).keystrokes) == std::vector<int>(5, 14));
  PinTrace empty = tr;
  empty.keystrokes.clear();
  empty.digits.clear();
  try {
    resample_uniform(empty, 14);
    FAIL("expected missing-timing-info");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingTimingInfo);
  }
}

TEST_CASE("perturb_timing") {
  auto tr = toy_trace(400, {50, 110, 170, 230, 290, 350}, [](int t) { return cplx(t, 0); });
  CHECK(perturb_timing(tr, 0.0, 9).keystrokes == tr.keystrokes);
  CHECK(perturb_timing(tr, 3.0, 9).keystrokes == perturb_timing(tr, 3.0, 9).keystrokes);

  double s = 0, s2 = 0;
  int n = 0;
  for (std::uint64_t seed = 0; n < 10000; ++seed) {
    const auto out = perturb_timing(tr, 3.0, seed);
    for (int i = 0; i < 6 && n < 10000; ++i, ++n) {
      const double d = out.keystrokes[i] - tr.keystrokes[i];
      s += d;
      s2 += d * d;
    }
  }
  const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
  CHECK(sd >= 2.8);
  CHECK(sd <= 3.2);

  // Tight spacing near the edges still yields a valid ordering.
  auto tight = toy_trace(8, {0, 1, 2, 3, 4, 5}, [](int t) { return cplx(t, 0); });
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto out = perturb_timing(tight, 5.0, seed);
    CHECK_NOTHROW(out.validate());
  }
}

TEST_CASE("reference policies") {
  auto tr = toy_trace(60, {4, 14, 24, 34, 44, 54}, [](int t) { return cplx(t, 0); });
  CHECK(select_reference(tr, ReferencePolicy::First, 1) == 0);
  CHECK(select_reference(tr, ReferencePolicy::LeakyDigit5, 1) == 14);  // 2-5-4-5-1-9
  const int r = select_reference(tr, ReferencePolicy::Random, 3);
  CHECK(r == select_reference(tr, ReferencePolicy::Random, 3));
  CHECK(r >= 0);
  CHECK(r < 60);
  CHECK_THROWS_AS(select_reference(tr, ReferencePolicy::HandFar, 0), Error);
  tr.digits = {1, 2, 3, 4, 6, 7};
  try {
    select_reference(tr, ReferencePolicy::LeakyDigit5, 0);
    FAIL("expected policy-unsatisfiable");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::PolicyUnsatisfiable);
  }
  CHECK(parse_policy("hand_far") == ReferencePolicy::HandFar);
  CHECK(to_string(ReferencePolicy::LeakyDigit5) == "leaky_digit5");
  CHECK_THROWS_AS(parse_policy("nope"), Error);
}

TEST_CASE("hand_far picks a sample at lift height") {
  sim::TypingPlan plan;
  plan.pin = {1, 9, 3, 7, 0, 5};
  plan.rng_seed = 2;
  sim::RenderOptions opt;
  const auto tr = sim::render_trace(sim::Scene{}, plan, sim::HandModel::default_hand(), opt);
  const int r = select_reference(tr, ReferencePolicy::HandFar, 0);
  CHECK(tr.hand_positions[r].z() == doctest::Approx(plan.lift_height));
}

TEST_CASE("normalize") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 1);
  std::vector<BfiMatrix> seq;
  for (int t = 0; t < 5; ++t) {
    BfiMatrix m(3, 4, 2);
    for (auto& v : m.values) v = cplx(n(rng), n(rng));
    seq.push_back(m);
  }
  const auto v = normalize(seq, 2);
  for (const auto& x : v[2].values) CHECK(x == cplx(1, 0));

  SUBCASE("constant input gives all ones") {
    std::vector<BfiMatrix> same(4, seq[0]);
    const auto w = normalize(same, 1);
    for (const auto& m : w)
      for (const auto& x : m.values) CHECK(std::abs(x - cplx(1, 0)) < 1e-15);
  }
  SUBCASE("doubling gives two") {
    auto twice = seq;
    for (std::size_t i = 0; i < twice[4].values.size(); ++i)
      twice[4].values[i] = 2.0 * twice[2].values[i];
    const auto w = normalize(twice, 2);
    for (const auto& x : w[4].values) CHECK(std::abs(x - cplx(2, 0)) < 1e-14);
  }
  SUBCASE("uniform complex scaling cancels") {
    auto scaled = seq;
    const cplx c(-0.3, 1.7);
    for (auto& m : scaled)
      for (auto& x : m.values) x *= c;
    const auto w = normalize(scaled, 2);
    for (int t = 0; t < 5; ++t)
      for (std::size_t i = 0; i < w[t].values.size(); ++i)
        CHECK(std::abs(w[t].values[i] - v[t].values[i]) <= 1e-12 * (1 + std::abs(v[t].values[i])));
  }
  SUBCASE("near-zero divisors are clamped") {
    auto z = seq;
    z[0].values[0] = 0.0;
    z[0].values[1] = cplx(1e-9, 0);
    const auto w = normalize(z, 0);
    CHECK(std::isfinite(std::abs(w[1].values[0])));
    CHECK(std::abs(w[1].values[1]) == doctest::Approx(std::abs(seq[1].values[1]) / 1e-6));
  }
  SUBCASE("subtraction variant") {
    const auto w = normalize(seq, 1, NormalizeMethod::Subtraction);
    for (const auto& x : w[1].values) CHECK(x == cplx(0, 0));
    CHECK(w[3].values[5] == seq[3].values[5] - seq[1].values[5]);
  }
  CHECK_THROWS_AS(normalize(seq, 5), Error);
}

TEST_CASE("segment windows and labels") {
  auto tr = toy_trace(100, {3, 20, 34, 48, 62, 90}, [](int t) { return cplx(t, 0); });
  Eigen::MatrixXd series(100, 3);
  for (int t = 0; t < 100; ++t) series.row(t) << t, 2 * t, -t;

  const auto s0 = segment(series, tr, 0);
  REQUIRE(s0.size() == 6);
  for (int i = 0; i < 6; ++i) {
    CHECK(s0[i].frames.rows() == 1);
    CHECK(s0[i].frames(0, 0) == tr.keystrokes[i]);
    CHECK(s0[i].center_digit == tr.digits[i]);
  }
  CHECK(s0[0].prev_digit == -1);
  CHECK(s0[0].next_digit == tr.digits[1]);
  CHECK(s0[5].next_digit == -1);

  const auto s10 = segment(series, tr, 10);
  CHECK(s10[0].frames.rows() == 14);
  CHECK(s10[0].start == 0);
  CHECK(s10[0].center_offset == 3);
  CHECK(s10[5].frames.rows() == 10 + 1 + 9);

  const auto s40 = segment(series, tr, 40);
  for (int i = 1; i < 5; ++i) {
    CHECK(s40[i].start <= tr.keystrokes[i - 1]);
    CHECK(s40[i].start + s40[i].frames.rows() - 1 >= tr.keystrokes[i + 1]);
  }
  CHECK_THROWS_AS(segment(series, tr, 41), Error);

  const auto w = padded_window(series, 3, 5);
  CHECK(w.rows() == 11);
  CHECK(w(0, 0) == 0);
  CHECK(w(1, 0) == 0);
  CHECK(w(2, 0) == 0);
  CHECK(w(5, 0) == 3);
  CHECK(padded_window(series, 98, 3)(6, 0) == 99);
}
