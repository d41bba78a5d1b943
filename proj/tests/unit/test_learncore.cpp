#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "doctest.h"
#include "pinsight/error.hpp"
#include "pinsight/learncore/checkpoint.hpp"
#include "pinsight/learncore/graph.hpp"
#include "pinsight/learncore/optim.hpp"

using namespace pinsight;
using namespace pinsight::learn;

namespace {

Tensor randn(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.values) v = n(rng);
  return t;
}

// Fixed weighted sum of every entry of x, built from graph ops.
Var probe(Graph& g, Var x) {
  const Var xr = g.flatten(x);  // [B, n/B]
  const int batch = g.value(xr).dim(0), cols = g.value(xr).dim(1);
  Tensor wcol({cols, 1});
  for (int i = 0; i < cols; ++i) wcol.values[i] = std::sin(1.0 + 0.7 * i);
  const Var y = g.dense(xr, g.input(wcol), g.input(Tensor({1})));  // [B, 1]
  Tensor ones({1, batch}, 1.0);
  for (int i = 0; i < batch; ++i) ones.values[i] = std::cos(0.3 * i);
  return g.dense(g.input(ones), y, g.input(Tensor({1})));  // [1, 1]
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.grad.size() == 24);
  CHECK(t.finite());
  CHECK(shape_product(std::vector<int>{}) == 1);
  CHECK_THROWS_AS(Tensor({2, -1}), Error);
}

TEST_CASE("linear graph gradients are exact up to rounding") {
  std::mt19937_64 rng(1);
  std::vector<Tensor> in = {randn({3, 5}, rng), randn({5, 1}, rng), randn({1}, rng)};
  auto build = [](Graph& g, std::span<const Var> v) {
    Tensor ones({1, 3}, 1.0);
    return g.dense(g.input(ones), g.dense(v[0], v[1], v[2]), g.input(Tensor({1})));
  };
  CHECK(check_gradients(build, in) < 1e-10);
}

TEST_CASE("dense + relu + cross-entropy gradient check") {
  std::mt19937_64 rng(2);
  std::vector<Tensor> in = {randn({4, 6}, rng), randn({6, 5}, rng), randn({5}, rng, 0.1),
                            randn({5, 3}, rng), randn({3}, rng, 0.1)};
  const std::vector<int> labels = {0, 2, 1, 2};
  auto build = [&](Graph& g, std::span<const Var> v) {
    const Var h = g.relu(g.dense(v[0], v[1], v[2]));
    return g.softmax_cross_entropy(g.dense(h, v[3], v[4]), labels);
  };
  CHECK(check_gradients(build, in) < 1e-4);
}

TEST_CASE("conv1d gradient check across strides and kernel overhang") {
  std::mt19937_64 rng(3);
  for (int stride : {1, 2, 3}) {
    for (int len : {1, 4, 7}) {
      CAPTURE(stride);
      CAPTURE(len);
      std::vector<Tensor> in = {randn({2, len, 3}, rng), randn({5, 3, 4}, rng), randn({4}, rng)};
      auto build = [stride](Graph& g, std::span<const Var> v) {
        const Var y = g.conv1d(v[0], v[1], v[2], stride);
        return probe(g, y);
      };
      CHECK(check_gradients(build, in) < 1e-4);
      Graph g;
      const Var y = g.conv1d(g.input(in[0]), g.input(in[1]), g.input(in[2]), stride);
      CHECK(g.value(y).shape == std::vector<int>{2, (len + stride - 1) / stride, 4});
    }
  }
}

TEST_CASE("conv1d matches a direct loop") {
  std::mt19937_64 rng(4);
  const Tensor x = randn({1, 6, 2}, rng), w = randn({3, 2, 1}, rng), b = randn({1}, rng);
  Graph g;
  const Var y = g.conv1d(g.input(x), g.input(w), g.input(b), 1);
  for (int o = 0; o < 6; ++o) {
    double ref = b.values[0];
    for (int t = 0; t < 3; ++t) {
      const int pos = o - 1 + t;
      if (pos < 0 || pos >= 6) continue;
      for (int c = 0; c < 2; ++c) ref += x.values[pos * 2 + c] * w.values[t * 2 + c];
    }
    CHECK(g.value(y).values[o] == doctest::Approx(ref).epsilon(1e-14));
  }
}

TEST_CASE("dropout with a frozen mask, flatten, rows, add and scale") {
  std::mt19937_64 rng(5);
  std::vector<Tensor> in = {randn({3, 2, 4}, rng), randn({2, 8}, rng)};
  std::mt19937_64 mask_rng(9);
  const auto mask = dropout_mask(24, 0.3, mask_rng);
  const std::vector<int> pick = {2, 0, 2};
  auto build = [&](Graph& g, std::span<const Var> v) {
    const Var d = g.flatten(g.dropout(v[0], mask));
    const Var r = g.rows(d, pick);
    const Var s = g.add(g.scale(r, -1.5), g.rows(v[1], std::vector<int>{1, 1, 0}));
    return probe(g, g.relu(s));
  };
  CHECK(check_gradients(build, in) < 1e-4);
  for (double m : mask) CHECK((m == 0.0 || m == doctest::Approx(1.0 / 0.7)));
}

TEST_CASE("binary cross-entropy") {
  std::mt19937_64 rng(6);
  std::vector<Tensor> in = {randn({5, 1}, rng, 3.0)};
  const std::vector<double> t = {1, 0, 1, 1, 0};
  auto build = [&](Graph& g, std::span<const Var> v) { return g.binary_cross_entropy(v[0], t); };
  CHECK(check_gradients(build, in) < 1e-4);
  // Zero logits give ln 2 whatever the targets.
  Graph g;
  CHECK(g.scalar(g.binary_cross_entropy(g.input(Tensor({5, 1})), t)) == doctest::Approx(std::log(2.0)));
  // Large logits stay finite.
  Tensor big({2, 1});
  big.values = {800.0, -800.0};
  const std::vector<double> t2 = {0.0, 1.0};
  CHECK(g.scalar(g.binary_cross_entropy(g.input(big), t2)) == doctest::Approx(800.0));
}

TEST_CASE("softmax rows are distributions; perfect one-hot CE is zero") {
  std::mt19937_64 rng(7);
  const Tensor z = randn({50, 10}, rng, 20.0);
  const auto p = softmax_rows(z.values, 10);
  for (int r = 0; r < 50; ++r) {
    double s = 0;
    for (int j = 0; j < 10; ++j) s += p[r * 10 + j];
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
  Tensor onehot({2, 3}, -1e4);
  onehot.values[1] = 1e4;
  onehot.values[5] = 1e4;
  Graph g;
  const std::vector<int> labels = {1, 2};
  CHECK(g.scalar(g.softmax_cross_entropy(g.input(onehot), labels)) == 0.0);
}

TEST_CASE("gradient reversal") {
  std::mt19937_64 rng(8);
  const Tensor x = randn({4, 3}, rng);
  SUBCASE("forward is identity, backward is -lambda times the upstream gradient") {
    for (double lambda : {0.0, 0.37, 1.0}) {
      Graph g;
      const Var xv = g.input(x);
      const Var y = g.grl(xv, lambda);
      CHECK(g.value(y).values == x.values);
      const Var out = probe(g, y);
      g.backward(out);
      for (std::size_t i = 0; i < x.size(); ++i) CHECK(g.grad(xv)[i] == -lambda * g.grad(y)[i]);
      if (lambda == 0.0)
        for (double v : g.grad(xv)) CHECK(v == 0.0);
    }
  }
  SUBCASE("pre-GRL parameters see -lambda times the numeric gradient") {
    const double lambda = 0.6;
    std::vector<Tensor> in = {x, randn({3, 4}, rng), randn({4}, rng), randn({4, 1}, rng), randn({1}, rng)};
    const std::vector<double> t = {1, 0, 0, 1};
    auto build = [&](Graph& g, std::span<const Var> v) {
      const Var h = g.grl(g.relu(g.dense(v[0], v[1], v[2])), lambda);
      return g.binary_cross_entropy(g.dense(h, v[3], v[4]), t);
    };
    const auto a = analytic_gradients(build, in);
    const auto n = numeric_gradients(build, in);
    double worst_pre = 0, worst_post = 0;
    for (int i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < a[i].size(); ++j) {
        const double expect = i < 3 ? -lambda * n[i][j] : n[i][j];
        const double rel = std::abs(a[i][j] - expect) /
                           std::max({std::abs(a[i][j]), std::abs(expect), 1e-8});
        (i < 3 ? worst_pre : worst_post) = std::max(i < 3 ? worst_pre : worst_post, rel);
      }
    CHECK(worst_pre < 1e-4);
    CHECK(worst_post < 1e-4);
  }
  CHECK_THROWS_AS([] { Graph g; g.grl(g.input(Tensor({1})), -0.1); }(), Error);
}

TEST_CASE("grl schedule") {
  CHECK(grl_schedule(0.0) == 0.0);
  CHECK(grl_schedule(1.0) == doctest::Approx(0.99991).epsilon(1e-5));
  CHECK(grl_schedule(0.5) == doctest::Approx(0.98661).epsilon(1e-5));
  double prev = -1;
  for (int i = 0; i <= 100; ++i) {
    const double l = grl_schedule(i / 100.0);
    CHECK(l > prev);
    prev = l;
  }
  CHECK_THROWS_AS(grl_schedule(1.5), Error);
}

TEST_CASE("uncertainty loss") {
  auto value = [](std::vector<double> losses, std::vector<double> s) {
    Graph g;
    std::vector<Var> ls;
    for (double l : losses) ls.push_back(g.input(Tensor({1}, l)));
    Tensor sv({static_cast<int>(s.size())});
    sv.values = s;
    return g.scalar(g.uncertainty(ls, g.input(sv)));
  };
  CHECK(value({0.7, 2.5}, {0, 0}) == doctest::Approx(3.2));
  const double L = 1.83;
  CHECK(value({L}, {std::log(L)}) == doctest::Approx(1.0 + std::log(L)));

  // The s-gradient vanishes exactly where exp(-s) = 1/L.
  Graph g;
  const Var l = g.input(Tensor({1}, L));
  Tensor s({1}, std::log(L));
  const Var sv = g.input(s);
  const std::vector<Var> ls = {l};
  g.backward(g.uncertainty(ls, sv));
  CHECK(std::abs(g.grad(sv)[0]) < 1e-15);
  CHECK(g.grad(l)[0] == doctest::Approx(1.0 / L));

  std::mt19937_64 rng(9);
  std::vector<Tensor> in = {randn({2, 3}, rng), randn({2}, rng)};
  const std::vector<int> y = {0, 2};
  auto build = [&](Graph& gr, std::span<const Var> v) {
    const Var ce = gr.softmax_cross_entropy(v[0], y);
    const Var sq = gr.scale(ce, 2.0);
    const std::vector<Var> both = {ce, sq};
    return gr.uncertainty(both, v[1]);
  };
  CHECK(check_gradients(build, in) < 1e-4);
}

TEST_CASE("mmd") {
  auto mmd_value = [](const Tensor& a, const Tensor& b, std::vector<double> gam) {
    Graph g;
    return g.scalar(g.mmd(g.input(a), g.input(b), gam));
  };
  std::mt19937_64 rng(10);
  const Tensor a = randn({5, 3}, rng), b = randn({4, 3}, rng, 2.0);
  const std::vector<double> gam = {0.1, 1.0, 4.0};
  CHECK(mmd_value(a, a, gam) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(mmd_value(a, b, gam) == doctest::Approx(mmd_value(b, a, gam)).epsilon(1e-14));
  CHECK(mmd_value(a, b, gam) >= 0.0);

  Tensor p({1, 2}), q({1, 2});
  p.values = {0.5, -1.0};
  q.values = {1.7, 0.6};
  const double r2 = 1.2 * 1.2 + 1.6 * 1.6;
  CHECK(mmd_value(p, q, {0.8}) == doctest::Approx(2.0 * (1.0 - std::exp(-0.8 * r2))).epsilon(1e-14));

  std::vector<Tensor> in = {a, b};
  auto build = [&](Graph& g, std::span<const Var> v) { return g.mmd(v[0], v[1], gam); };
  CHECK(check_gradients(build, in) < 1e-4);

  for (int trial = 0; trial < 50; ++trial)
    CHECK(mmd_value(randn({3, 2}, rng), randn({2, 2}, rng), gam) >= 0.0);
}

TEST_CASE("supervised contrastive loss") {
  auto loss = [](const Tensor& e, std::vector<int> labels, double tau) {
    Graph g;
    return g.scalar(g.supcon(g.input(e), labels, tau));
  };
  SUBCASE("identical embeddings") {
    Tensor e({5, 3});
    for (int i = 0; i < 5; ++i) e.values[i * 3 + 1] = 2.0;
    // Every similarity is 1/tau, so each anchor's term is log(batch - 1).
    CHECK(loss(e, {0, 0, 1, 1, 1}, 0.5) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  }
  SUBCASE("one positive pair and an orthogonal negative") {
    Tensor e({3, 2});
    e.values = {1, 0, 2, 0, 0, 3};
    CHECK(loss(e, {4, 4, 7}, 1.0) == doctest::Approx(std::log(1.0 + std::exp(1.0)) - 1.0).epsilon(1e-14));
  }
  SUBCASE("permutation invariance and gradients") {
    std::mt19937_64 rng(11);
    const Tensor e = randn({6, 4}, rng);
    const std::vector<int> labels = {0, 1, 0, 2, 1, 0};
    Tensor p({6, 4});
    const std::vector<int> perm = {3, 5, 0, 4, 1, 2};
    std::vector<int> plabels(6);
    for (int i = 0; i < 6; ++i) {
      std::copy_n(e.values.begin() + perm[i] * 4, 4, p.values.begin() + i * 4);
      plabels[i] = labels[perm[i]];
    }
    CHECK(loss(e, labels, 0.3) == doctest::Approx(loss(p, plabels, 0.3)).epsilon(1e-13));
    CHECK(loss(e, labels, 0.3) >= 0.0);
    std::vector<Tensor> in = {e};
    auto build = [&](Graph& g, std::span<const Var> v) { return g.supcon(v[0], labels, 0.3); };
    CHECK(check_gradients(build, in) < 1e-4);
  }
  SUBCASE("degenerate batch") {
    std::mt19937_64 rng(12);
    try {
      loss(randn({3, 2}, rng), {0, 1, 2}, 1.0);
      FAIL("expected degenerate-batch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DegenerateBatch);
    }
    CHECK_THROWS_AS(loss(randn({1, 2}, rng), {0}, 1.0), Error);
  }
}

TEST_CASE("AdamW") {
  ParamStore ps;
  auto& w = ps.add("w", {3});
  w.values = {1.0, -2.0, 0.5};
  AdamW opt;
  const auto before = w.values;
  opt.step(ps);
  for (int i = 0; i < 3; ++i) CHECK(w.values[i] == before[i] - 1e-3 * 1e-4 * before[i]);

  // First step moves each coordinate by about lr against the gradient sign.
  ParamStore q;
  auto& v = q.add("v", {2});
  v.grad = {0.3, -5.0};
  AdamW opt2(AdamWConfig{.weight_decay = 0.0});
  opt2.step(q);
  CHECK(v.values[0] == doctest::Approx(-1e-3).epsilon(1e-6));
  CHECK(v.values[1] == doctest::Approx(1e-3).epsilon(1e-6));
  CHECK(opt2.steps() == 1);
}

TEST_CASE("checkpoint round trip") {
  Checkpoint ck;
  std::mt19937_64 rng(13);
  auto& a = ck.params.add("conv0.w", {5, 3, 2});
  glorot_uniform(a, 15, 10, rng);
  auto& b = ck.params.add("head.b", {10});
  b.values[3] = -0.25;
  ck.scalars["epoch"] = 7;
  ck.scalars["best_val"] = 0.93;
  ck.config_json = R"({"seed":3})";

  const auto bytes = encode_checkpoint(ck);
  CHECK(decode_checkpoint(bytes) == ck);

  const auto path = std::filesystem::temp_directory_path() / "pinsight_ck_test.bin";
  save_checkpoint(path, ck);
  CHECK(load_checkpoint(path) == ck);
  std::filesystem::remove(path);

  auto bad = bytes;
  bad[0] = 'X';
  try {
    decode_checkpoint(bad);
    FAIL("expected corrupt-header");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CorruptHeader);
  }
  auto cut = bytes;
  cut.resize(cut.size() - 9);
  try {
    decode_checkpoint(cut);
    FAIL("expected truncation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Truncation);
  }
}
