#include "pinsight/attacks/wink.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pinsight/error.hpp"

namespace pinsight::attacks {

Pin pin_from_index(int index) {
  if (index < 0 || index >= kPinCount) throw Error(ErrorKind::IndexOutOfRange, "pin index");
  Pin p{};
  for (int i = 5; i >= 0; --i) {
    p[i] = index % 10;
    index /= 10;
  }
  return p;
}

int pin_index(const Pin& pin) {
  int v = 0;
  for (int d : pin) {
    if (d < 0 || d > 9) throw Error(ErrorKind::IndexOutOfRange, "pin digit");
    v = v * 10 + d;
  }
  return v;
}

WinkEvidence wink_evidence(const features::TraceFeatures& trace) {
  if (trace.keystrokes.size() != 6)
    throw Error(ErrorKind::MissingTimingInfo, "wink needs exactly six keystrokes, trace " + trace.id);
  const auto& f = trace.series.frames;
  const int T = static_cast<int>(f.rows());
  for (int k : trace.keystrokes)
    if (k < 0 || k >= T) throw Error(ErrorKind::IndexOutOfRange, "keystroke outside trace " + trace.id);

  Eigen::RowVectorXd mean = f.colwise().mean();
  Eigen::RowVectorXd scale(f.cols());
  for (int c = 0; c < f.cols(); ++c) {
    const double var = (f.col(c).array() - mean[c]).square().mean();
    scale[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  auto z = [&](int t) -> Eigen::RowVectorXd { return (f.row(t) - mean).cwiseQuotient(scale); };

  // Typical frame-to-frame distance within this trace.
  const int stride = std::max(1, (T + 299) / 300);
  std::vector<Eigen::RowVectorXd> sub;
  for (int t = 0; t < T; t += stride) sub.push_back(z(t));
  std::vector<double> pair_d;
  for (std::size_t i = 0; i < sub.size(); ++i)
    for (std::size_t j = i + 1; j < sub.size(); ++j) pair_d.push_back((sub[i] - sub[j]).norm());
  double s = 0.0;
  if (!pair_d.empty()) {
    auto mid = pair_d.begin() + static_cast<long>(pair_d.size() / 2);
    std::nth_element(pair_d.begin(), mid, pair_d.end());
    s = *mid;
  }

  WinkEvidence ev;
  std::array<Eigen::RowVectorXd, 6> key;
  for (int i = 0; i < 6; ++i) key[i] = z(trace.keystrokes[i]);
  bool all_same = true;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      const double d = (key[i] - key[j]).norm();
      if (i != j && d > 1e-12) all_same = false;
      ev.delta[i][j] = (d == 0.0 || s <= 0.0) ? 0.0 : 1.0 - std::exp(-d * d / (2.0 * s * s));
    }
  bool equal_travel = true;
  for (int i = 0; i < 5; ++i) {
    ev.travel[i] = (trace.keystrokes[i + 1] - trace.keystrokes[i]) / trace.sample_rate;
    if (ev.travel[i] != ev.travel[0]) equal_travel = false;
  }
  ev.degenerate = all_same && equal_travel;
  return ev;
}

namespace {

struct Prepared {
  std::array<std::array<double, 10>, 10> x{};  // lift + keypad distance
  double travel_sum = 0.0;
};

Prepared prepare(const WinkEvidence& ev, const WinkConfig& config) {
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0)) throw Error(ErrorKind::InvalidConfig, "alpha outside [0,1]");
  Prepared p;
  for (int a = 0; a < 10; ++a)
    for (int b = 0; b < 10; ++b)
      p.x[a][b] = config.lift_allowance + config.layout.distance(a, b);
  p.travel_sum = std::accumulate(ev.travel.begin(), ev.travel.end(), 0.0);
  return p;
}

double penalty(const WinkEvidence& ev, const Prepared& prep, const WinkConfig& config, const Pin& pin) {
  double c = 0.0;
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j) {
      const double d = ev.delta[i][j];
      c += pin[i] == pin[j] ? d : 1.0 - d;
    }
  c /= 15.0;

  std::array<double, 5> x{};
  double tx = 0.0, xx = 0.0;
  for (int i = 0; i < 5; ++i) {
    x[i] = prep.x[pin[i]][pin[i + 1]];
    tx += ev.travel[i] * x[i];
    xx += x[i] * x[i];
  }
  const double kappa = xx > 0.0 ? std::max(tx / xx, 0.0) : 0.0;
  double t = 0.0;
  for (int i = 0; i < 5; ++i) t += std::abs(ev.travel[i] - kappa * x[i]);
  if (prep.travel_sum > 0.0) t /= prep.travel_sum;
  return config.alpha * c + (1.0 - config.alpha) * t;
}

}  // namespace

double wink_penalty(const WinkEvidence& ev, const Pin& pin, const WinkConfig& config) {
  return penalty(ev, prepare(ev, config), config, pin);
}

std::vector<double> wink_scores(const WinkEvidence& ev, const WinkConfig& config, bool parallel) {
  const Prepared prep = prepare(ev, config);
  std::vector<double> scores(kPinCount);
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < kPinCount; ++i) scores[i] = -penalty(ev, prep, config, pin_from_index(i));
  return scores;
}

std::vector<RankedPin> wink_rank(const WinkEvidence& ev, const WinkConfig& config, int top_k, bool parallel) {
  const auto scores = wink_scores(ev, config, parallel);
  top_k = std::clamp(top_k, 0, kPinCount);
  std::vector<int> idx(kPinCount);
  std::iota(idx.begin(), idx.end(), 0);
  auto better = [&](int a, int b) {
    const double sa = scores[a], sb = scores[b];
    return sa != sb ? sa > sb : a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + top_k, idx.end(), better);
  std::vector<RankedPin> out;
  out.reserve(top_k);
  for (int i = 0; i < top_k; ++i) out.push_back({idx[i], scores[idx[i]]});
  return out;
}

}  // namespace pinsight::attacks
