#include "invariants.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "pinsight/bfi_codec.hpp"
#include "pinsight/channel_sim.hpp"
#include "pinsight/error.hpp"
#include "pinsight/eval/splits.hpp"
#include "pinsight/eval/top100.hpp"
#include "pinsight/features.hpp"
#include "pinsight/learncore/graph.hpp"
#include "pinsight/store/dataset.hpp"

namespace pinsight::tools {

namespace {

Eigen::MatrixXcd random_orthonormal(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXcd g(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) g(r, c) = {n(rng), n(rng)};
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(g);
  return qr.householderQ() * Eigen::MatrixXcd::Identity(rows, cols);
}

std::string codec_check() {
  if (codec::angle_count(4, 2) != 10) return "angle_count(4,2) != 10";
  std::mt19937_64 rng(1);
  for (const auto& cb : codec::kCodebooks) {
    codec::AngleReport r;
    r.codebook = cb;
    r.config = {4, 2, 234};
    r.angles.resize(234 * 10);
    const auto layout = codec::angle_layout(4, 2);
    for (int s = 0; s < 234; ++s)
      for (int a = 0; a < 10; ++a) {
        const int bits = layout[a].kind == codec::AngleKind::Phi ? cb.bits_phi : cb.bits_psi;
        r.at(s, a) = static_cast<std::uint16_t>(rng() % (1u << bits));
      }
    const auto v = codec::decompress(r);
    for (int s = 0; s < 234; ++s) {
      const Eigen::MatrixXcd m = v.subcarrier(s);
      if ((m.adjoint() * m - Eigen::MatrixXcd::Identity(2, 2)).cwiseAbs().maxCoeff() > 1e-6)
        return "decompressed columns are not orthonormal";
      for (int c = 0; c < 2; ++c)
        if (std::abs(m(3, c).imag()) > 1e-12 || m(3, c).real() < -1e-12) return "last row is not real non-negative";
    }
    if (!(codec::compress(v, cb) == r)) return "compress(decompress(r)) != r";
    const auto bytes = codec::serialize_payload(r);
    if (!(codec::parse_payload(bytes, r.config, cb) == r)) return "payload round trip failed";
  }
  return {};
}

std::string features_check() {
  if (features::kFeatureWidth != 134) return "feature width is not 134";
  int total = 0;
  for (const auto& c : features::feature_classes()) {
    if (c.offset != total) return "feature classes are not contiguous";
    total += c.count;
  }
  if (total != 134) return "class counts do not add up to 134";
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto a = random_orthonormal(4, 2, rng), b = random_orthonormal(4, 2, rng),
               c = random_orthonormal(4, 2, rng);
    const double ab = features::grassmann_distance(a, b), bc = features::grassmann_distance(b, c),
                 ac = features::grassmann_distance(a, c);
    if (features::grassmann_distance(a, a) > 1e-6) return "d(a,a) != 0";
    if (std::abs(ab - features::grassmann_distance(b, a)) > 1e-9) return "Grassmann distance is not symmetric";
    if (ac > ab + bc + 1e-9) return "Grassmann triangle inequality fails";
  }
  return {};
}

std::string gradients_check() {
  using namespace learn;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 0.5);
  auto randn = [&](std::vector<int> shape) {
    Tensor t(std::move(shape));
    for (auto& v : t.values) v = n(rng);
    return t;
  };
  const std::vector<Tensor> inputs = {randn({2, 7, 3}), randn({3, 3, 4}), randn({4}), randn({16, 10}), randn({10})};
  const GraphBuilder build = [](Graph& g, std::span<const Var> in) {
    const Var h = g.relu(g.conv1d(in[0], in[1], in[2], 2));
    const Var logits = g.dense(g.flatten(h), in[3], in[4]);
    static const int labels[] = {3, 8};
    return g.softmax_cross_entropy(logits, labels);
  };
  const double err = check_gradients(build, inputs);
  if (!(err < 1e-4)) return "finite-difference mismatch " + std::to_string(err);
  if (grl_schedule(0.0) != 0.0) return "lambda(0) != 0";
  return {};
}

std::string ranking_check() {
  std::mt19937_64 rng(7);
  std::gamma_distribution<double> g(0.4, 1.0);
  std::uniform_int_distribution<int> d(0, 9);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<eval::DigitRow> grid(6);
    for (auto& row : grid) {
      double s = 0;
      for (double& p : row) s += (p = g(rng) + 1e-12);
      for (double& p : row) p /= s;
    }
    std::vector<int> truth(6);
    for (int& x : truth) x = d(rng);
    if (!(eval::rank_beam(grid, truth) == eval::rank_bruteforce(grid, truth))) return "beam and brute force disagree";
  }
  return {};
}

std::string splits_check() {
  const std::pair<eval::SplitId, std::size_t> expected[] = {
      {eval::SplitId::RP, 720}, {eval::SplitId::RW, 675}, {eval::SplitId::RA, 600}, {eval::SplitId::AP, 512}};
  const auto all = eval::GridSlice::full().domains();
  for (const auto& [id, seen] : expected)
    for (const auto& spec : eval::all_instances(id)) {
      const auto plan = eval::make_splits(spec);
      if (plan.train.size() != seen) return eval::to_string(id) + " seen-domain count is wrong";
      std::set<DomainKey> keys;
      std::size_t n = 0;
      for (const auto* part : {&plan.train, &plan.first[0], &plan.first[1], &plan.second}) {
        keys.insert(part->begin(), part->end());
        n += part->size();
      }
      if (n != all.size() || keys.size() != all.size()) return eval::to_string(id) + " is not a partition";
    }
  return {};
}

std::string simulator_check() {
  sim::TypingPlan plan;
  plan.pin = {1, 2, 3, 4, 5, 6};
  plan.rng_seed = 11;
  const DomainKey key{0, 0, 44, 0};
  const auto scene = sim::Scene::from_domain(key, 3);
  const auto a = sim::render_trace(scene, plan, sim::HandModel::default_hand(), {}, key);
  const auto b = sim::render_trace(scene, plan, sim::HandModel::default_hand(), {}, key);
  if (!(a.reports == b.reports) || a.keystrokes != b.keystrokes) return "rendering is not deterministic";
  return {};
}

CheckResult run(const std::string& name, const std::function<std::string()>& fn) {
  try {
    const std::string problem = fn();
    return {name, problem.empty(), problem};
  } catch (const std::exception& e) {
    return {name, false, e.what()};
  }
}

}  // namespace

std::vector<CheckResult> run_invariants(const std::string& dataset) {
  std::vector<CheckResult> out;
  out.push_back(run("codec", codec_check));
  out.push_back(run("features", features_check));
  out.push_back(run("gradients", gradients_check));
  out.push_back(run("top100", ranking_check));
  out.push_back(run("splits", splits_check));
  out.push_back(run("simulator", simulator_check));
  if (!dataset.empty())
    out.push_back(run("dataset", [&] {
      const auto problems = store::verify_dataset(dataset);
      std::ostringstream os;
      for (std::size_t i = 0; i < problems.size(); ++i) os << (i ? "; " : "") << problems[i];
      return os.str();
    }));
  return out;
}

}  // namespace pinsight::tools
