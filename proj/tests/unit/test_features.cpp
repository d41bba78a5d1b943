#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "pinsight/channel_sim.hpp"
#include "pinsight/error.hpp"
#include "pinsight/features.hpp"
#include "test_util.hpp"

using namespace pinsight;
using namespace pinsight::features;
using codec::BfiMatrix;
using codec::cplx;

namespace {

constexpr double kPi = std::numbers::pi;

const PinTrace& sim_trace() {
  static const PinTrace tr = [] {
    sim::TypingPlan plan;
    plan.pin = {2, 5, 4, 5, 1, 9};
    plan.rng_seed = 17;
    sim::Scene scene = sim::Scene::from_domain({1, 3, 104, 90});
    scene.snr_db = 30;
    return sim::render_trace(scene, plan, sim::HandModel::default_hand(), {}, {1, 3, 104, 90});
  }();
  return tr;
}

FeatureSeries extract_trace(const PinTrace& tr, int ref) {
  const auto v = prep::normalize(tr.matrices, ref);
  return extract(tr.reports, tr.matrices, v, ref);
}

Eigen::MatrixXcd basis(std::initializer_list<cplx> col) {
  Eigen::MatrixXcd m(col.size(), 1);
  int i = 0;
  for (auto x : col) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST_CASE("feature layout is the frozen 134-column contract") {
  const std::vector<int> counts = {8, 6, 10, 8, 8, 3, 3, 16, 8, 8, 6, 8, 6, 10, 8, 6, 12};
  const std::vector<std::string_view> names = {"nAmp", "nPhs",  "nAng",   "ed0",    "edR",   "gR",
                                               "g",    "dfs",   "mrc",    "hAmp",   "hPhs",  "lAmp",
                                               "lPhs", "pcaAng", "pcaAmp", "pcaPhs", "steer"};
  const auto classes = feature_classes();
  REQUIRE(classes.size() == 17);
  int offset = 0;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    CHECK(classes[i].name == names[i]);
    CHECK(classes[i].count == counts[i]);
    CHECK(classes[i].offset == offset);
    offset += classes[i].count;
  }
  CHECK(offset == kFeatureWidth);
  CHECK(feature_class("steer").offset == 122);
  CHECK(feature_class("pcaAng").offset == 98);
  CHECK(contract_hash() == contract_hash());
  CHECK(channel_map()[5] == std::pair<int, int>(2, 1));
}

TEST_CASE("grassmann distance examples") {
  const auto e1 = basis({1, 0}), e2 = basis({0, 1});
  const auto d = basis({1 / std::sqrt(2.0), 1 / std::sqrt(2.0)});
  CHECK(grassmann_distance(e1, e1) == 0.0);
  CHECK(grassmann_distance(e1, e2) == doctest::Approx(kPi / 2).epsilon(1e-14));
  const double oracle = std::acos(std::abs((e1.adjoint() * d)(0, 0)));
  CHECK(oracle == doctest::Approx(kPi / 4));
  CHECK(grassmann_distance(e1, d) == doctest::Approx(oracle).epsilon(1e-14));
  // Tiny angles keep full relative precision.
  const double eps = 1e-9;
  const auto near = basis({std::cos(eps), std::sin(eps)});
  CHECK(grassmann_distance(e1, near) == doctest::Approx(eps).epsilon(1e-6));
  try {
    grassmann_distance(basis({1, 1}), e1);
    FAIL("expected non-orthonormal-input");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonOrthonormalInput);
  }
}

TEST_CASE("grassmann metric axioms on random subspaces") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0, 1);
  for (int i = 0; i < 300; ++i) {
    const auto a = test::random_orthonormal(4, 2, rng);
    const auto b = test::random_orthonormal(4, 2, rng);
    const auto c = test::random_orthonormal(4, 2, rng);
    const double ab = grassmann_distance(a, b), bc = grassmann_distance(b, c),
                 ac = grassmann_distance(a, c);
    CHECK(ab >= 0);
    CHECK(ab == grassmann_distance(b, a));
    CHECK(ac <= ab + bc + 1e-9);
    CHECK(grassmann_distance(a, a) == 0.0);
    const Eigen::MatrixXcd u = test::random_orthonormal(2, 2, rng);
    CHECK(grassmann_distance(a * u, b) == doctest::Approx(ab).epsilon(1e-9));
    CHECK(grassmann_distance(a, b * u) == doctest::Approx(ab).epsilon(1e-9));
    CHECK(ab <= kPi / 2 * std::sqrt(2.0) + 1e-12);
  }
}

TEST_CASE("unwrap_phase") {
  const std::vector<double> a = {0, 0.1, 0.2};
  CHECK(unwrap_phase(a) == a);
  const std::vector<double> b = {3.0, -3.0};
  const auto u = unwrap_phase(b);
  CHECK(u[0] == 3.0);
  CHECK(u[1] == doctest::Approx(3.0 + (2 * kPi - 6.0)));
  const std::vector<double> c(5, 1.25);
  CHECK(unwrap_phase(c) == c);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ph(-kPi, kPi);
  std::vector<double> r(200);
  for (auto& x : r) x = ph(rng);
  const auto w = unwrap_phase(r);
  CHECK(w[0] == r[0]);
  for (std::size_t i = 1; i < w.size(); ++i) {
    const double d = w[i] - w[i - 1];
    CHECK(d > -kPi - 1e-12);
    CHECK(d <= kPi + 1e-12);
    CHECK(std::remainder(w[i] - r[i], 2 * kPi) == doctest::Approx(0).epsilon(1e-9));
  }
}

TEST_CASE("pca_first_component") {
  Eigen::VectorXd u(5), v(3);
  u << 1, -2, 0.5, 3, -2.5;  // zero mean
  v << 0.3, -1.2, 0.4;
  const Eigen::VectorXd s = pca_first_component(u * v.transpose());
  // Largest loading is -1.2, flipped positive, so scores carry -u * |v|.
  CHECK((s + u * v.norm()).cwiseAbs().maxCoeff() < 1e-12);

  CHECK(pca_first_component(Eigen::MatrixXd::Zero(6, 4)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(pca_first_component(Eigen::MatrixXd::Constant(6, 4, 0.1)).cwiseAbs().maxCoeff() == 0.0);

  Eigen::VectorXd x(4);
  x << 2, 4, 7, -1;
  Eigen::MatrixXd m(4, 2);
  m.col(0) = x;
  m.col(1) = 2 * x;
  const Eigen::VectorXd xc = x.array() - x.mean();
  CHECK((pca_first_component(m) - xc * std::sqrt(5.0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("extract on a simulated trace") {
  const auto& tr = sim_trace();
  CHECK(tr.matrices[0].values.size() == 1872);
  const int ref = 7;
  const auto fs = extract_trace(tr, ref);
  CHECK(fs.frames.rows() == tr.length());
  CHECK(fs.frames.cols() == 134);
  CHECK(fs.frames.allFinite());
  // edR vanishes at the reference.
  for (int c = 0; c < 8; ++c) CHECK(fs.frames(ref, 32 + c) == 0.0);
  CHECK(fs.frames(0, 40) == 0.0);
  CHECK(fs.frames(ref, 42) == doctest::Approx(0).epsilon(1e-12));
  // Last-row channels have zero phase, so the phase classes skip them.
  CHECK(fs.frames.col(8).cwiseAbs().maxCoeff() > 0);

  SUBCASE("bitwise deterministic") {
    const auto again = extract_trace(tr, ref);
    CHECK(again.frames == fs.frames);
  }
  SUBCASE("nAmp ignores per-element phase rotation") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ph(-kPi, kPi);
    auto rotated = tr.matrices;
    for (auto& m : rotated)
      for (auto& x : m.values) x *= std::polar(1.0, ph(rng));
    const auto v = prep::normalize(rotated, ref);
    const auto other = extract(tr.reports, rotated, v, ref);
    CHECK((other.frames.leftCols(8) - fs.frames.leftCols(8)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("steer ignores per-subcarrier amplitude scaling") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> amp(0.2, 3.0);
    auto scaled = tr.matrices;
    std::vector<double> gain(tr.matrices[0].n_sub);
    for (auto& g : gain) g = amp(rng);
    for (auto& m : scaled)
      for (int s = 0; s < m.n_sub; ++s)
        for (int t = 0; t < 4; ++t)
          for (int k = 0; k < 2; ++k) m.at(s, t, k) *= gain[s];
    const auto v = prep::normalize(scaled, ref);
    const auto other = extract(tr.reports, scaled, v, ref);
    CHECK((other.frames.rightCols(12) - fs.frames.rightCols(12)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("constant V yields zero change features") {
  const auto& tr = sim_trace();
  const int T = 20;
  std::vector<codec::AngleReport> vhat(T, tr.reports[3]);
  std::vector<BfiMatrix> vt(T, tr.matrices[3]);
  const std::vector<BfiMatrix> v(T, prep::normalize(tr.matrices, 3)[9]);
  const auto fs = extract(vhat, vt, v, 4);
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < 8; ++c) {
      CHECK(fs.frames(t, 24 + c) == 0.0);  // ed0
      CHECK(fs.frames(t, 62 + c) == 0.0);  // mrc
    }
    for (int a = 0; a < 10; ++a) CHECK(fs.frames(t, 14 + a) == 0.0);  // nAng
    CHECK(fs.frames(t, 40) == doctest::Approx(0).epsilon(1e-12));
    CHECK(fs.frames(t, 43) == doctest::Approx(0).epsilon(1e-12));
    for (int i = 0; i < 16; ++i) CHECK(fs.frames(t, 46 + i) == doctest::Approx(0).epsilon(1e-12));
  }
}

TEST_CASE("subcarrier selection is variance consistent") {
  const auto& tr = sim_trace();
  const auto v = prep::normalize(tr.matrices, 0);
  const auto sel = select_subcarriers(v, 5);
  for (int c = 0; c < 8; ++c) {
    REQUIRE(sel.high_amp[c].size() == 5);
    double min_high = 1e300, max_low = -1;
    for (int s : sel.high_amp[c]) min_high = std::min(min_high, sel.amp_variance[c][s]);
    for (int s : sel.low_amp[c]) max_low = std::max(max_low, sel.amp_variance[c][s]);
    CHECK(min_high >= max_low);
  }
  for (int c = 0; c < 6; ++c) {
    double min_high = 1e300, max_low = -1;
    for (int s : sel.high_phase[c]) min_high = std::min(min_high, sel.phase_variance[c][s]);
    for (int s : sel.low_phase[c]) max_low = std::max(max_low, sel.phase_variance[c][s]);
    CHECK(min_high >= max_low);
  }
}

TEST_CASE("shape errors") {
  const auto& tr = sim_trace();
  const auto v = prep::normalize(tr.matrices, 0);
  std::vector<codec::AngleReport> short_hat(tr.reports.begin(), tr.reports.end() - 1);
  try {
    extract(short_hat, tr.matrices, v, 0);
    FAIL("expected shape-mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
  }
  CHECK_THROWS_AS(extract(tr.reports, tr.matrices, v, tr.length()), Error);
}

TEST_CASE("featurize pipeline") {
  const auto& tr = sim_trace();
  FeaturizeOptions opt;
  opt.seed = 3;
  const auto f = featurize(tr, opt);
  CHECK(f.series.frames.cols() == 134);
  CHECK(f.digits == tr.digits);
  for (std::size_t i = 1; i < f.keystrokes.size(); ++i)
    CHECK(f.keystrokes[i] - f.keystrokes[i - 1] == 14);

  std::vector<PinTrace> batch(4, tr);
  for (int i = 0; i < 4; ++i) batch[i].id += std::to_string(i);
  opt.timing_sigma = 3;
  const auto p = featurize_batch(batch, opt, true);
  const auto s = featurize_batch(batch, opt, false);
  for (int i = 0; i < 4; ++i) {
    CHECK(p[i].series.frames == s[i].series.frames);
    CHECK(p[i].keystrokes == s[i].keystrokes);
  }
}
