#include "pinsight/eval/top100.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pinsight/error.hpp"

namespace pinsight::eval {

std::string to_string(TieRule r) { return r == TieRule::StrictlyBetter ? "strictly_better" : "better_or_equal"; }

TieRule parse_tie_rule(const std::string& s) {
  if (s == "strictly_better") return TieRule::StrictlyBetter;
  if (s == "better_or_equal") return TieRule::BetterOrEqual;
  throw Error(ErrorKind::InvalidConfig, "unknown tie rule '" + s + "'");
}

void validate_grid(std::span<const DigitRow> grid) {
  if (grid.empty()) throw Error(ErrorKind::InvalidDistribution, "empty probability grid");
  for (std::size_t r = 0; r < grid.size(); ++r) {
    double s = 0.0;
    for (double p : grid[r]) {
      if (!std::isfinite(p) || p < 0.0)
        throw Error(ErrorKind::InvalidDistribution, "row " + std::to_string(r) + " has an invalid entry");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-6)
      throw Error(ErrorKind::InvalidDistribution, "row " + std::to_string(r) + " sums to " + std::to_string(s));
  }
}

namespace {

std::vector<DigitRow> log_table(std::span<const DigitRow> grid) {
  std::vector<DigitRow> l(grid.size());
  for (std::size_t r = 0; r < grid.size(); ++r)
    for (int d = 0; d < 10; ++d) l[r][d] = std::log(grid[r][d]);  // log(0) = -inf
  return l;
}

void check_truth(std::span<const DigitRow> grid, std::span<const int> truth) {
  if (truth.size() != grid.size()) throw Error(ErrorKind::ShapeMismatch, "PIN length differs from grid rows");
  for (int d : truth)
    if (d < 0 || d > 9) throw Error(ErrorKind::IndexOutOfRange, "PIN digit");
}

double score_of(const std::vector<DigitRow>& l, std::span<const int> pin) {
  double s = l[0][pin[0]];
  for (std::size_t i = 1; i < pin.size(); ++i) s += l[i][pin[i]];
  return s;
}

// Whether a candidate score counts towards the truth's rank.
struct Counter {
  TieRule rule;
  double truth;
  bool operator()(double s) const {
    return rule == TieRule::StrictlyBetter ? s > truth + kTieTolerance : s >= truth - kTieTolerance;
  }
  RankResult finish(long count, int k) const {
    const long rank = rule == TieRule::StrictlyBetter ? count + 1 : count;
    return {rank <= k, rank};
  }
};

}  // namespace

double pin_log_score(std::span<const DigitRow> grid, std::span<const int> pin) {
  check_truth(grid, pin);
  return score_of(log_table(grid), pin);
}

RankResult rank_bruteforce(std::span<const DigitRow> grid, std::span<const int> truth, TieRule rule, int k,
                           bool parallel) {
  validate_grid(grid);
  check_truth(grid, truth);
  const int n = static_cast<int>(grid.size());
  if (n > 7) throw Error(ErrorKind::InvalidConfig, "brute force is limited to 7 digits");
  const auto l = log_table(grid);
  const Counter counts{rule, score_of(l, truth)};
  long total = 1;
  for (int i = 0; i < n; ++i) total *= 10;
  long count = 0;
#pragma omp parallel for reduction(+ : count) schedule(static) if (parallel)
  for (long c = 0; c < total; ++c) {
    int digits[7];
    long v = c;
    for (int i = n - 1; i >= 0; --i) {
      digits[i] = static_cast<int>(v % 10);
      v /= 10;
    }
    double s = l[0][digits[0]];
    for (int i = 1; i < n; ++i) s += l[i][digits[i]];
    if (counts(s)) ++count;
  }
  return counts.finish(count, k);
}

std::vector<Candidate> top_k_candidates(std::span<const DigitRow> grid, int k) {
  validate_grid(grid);
  if (k < 1) throw Error(ErrorKind::InvalidConfig, "k must be positive");
  const auto l = log_table(grid);
  auto before = [](const Candidate& a, const Candidate& b) {
    return a.score != b.score ? a.score > b.score : a.digits < b.digits;
  };
  std::vector<Candidate> beam;
  for (int d = 0; d < 10; ++d) beam.push_back({{d}, l[0][d]});
  std::sort(beam.begin(), beam.end(), before);
  if (static_cast<int>(beam.size()) > k) beam.resize(static_cast<std::size_t>(k));
  for (std::size_t row = 1; row < grid.size(); ++row) {
    std::vector<Candidate> next;
    next.reserve(beam.size() * 10);
    for (const auto& c : beam)
      for (int d = 0; d < 10; ++d) {
        Candidate e = c;
        e.digits.push_back(d);
        e.score = c.score + l[row][d];
        next.push_back(std::move(e));
      }
    const std::size_t keep = std::min(next.size(), static_cast<std::size_t>(k));
    std::partial_sort(next.begin(), next.begin() + static_cast<long>(keep), next.end(), before);
    next.resize(keep);
    beam = std::move(next);
  }
  return beam;
}

namespace {

// Counts candidates passing `counts`, pruning subtrees whose whole score
// range lies clearly on one side of the threshold.
class BoundedCounter {
 public:
  BoundedCounter(const std::vector<DigitRow>& l, const Counter& counts) : l_(l), counts_(counts) {
    const std::size_t n = l.size();
    max_rest_.assign(n + 1, 0.0);
    min_rest_.assign(n + 1, 0.0);
    pow10_.assign(n + 1, 1);
    for (std::size_t i = n; i-- > 0;) {
      max_rest_[i] = max_rest_[i + 1] + *std::max_element(l[i].begin(), l[i].end());
      min_rest_[i] = min_rest_[i + 1] + *std::min_element(l[i].begin(), l[i].end());
      pow10_[i] = pow10_[i + 1] * 10;
    }
    threshold_ = counts.rule == TieRule::StrictlyBetter ? counts.truth + kTieTolerance
                                                        : counts.truth - kTieTolerance;
    margin_ = 1e-6 * (1.0 + std::abs(counts.truth));
  }

  long count() {
    long total = 0;
    for (int d = 0; d < 10; ++d) total += visit(1, l_[0][d]);
    return total;
  }

 private:
  long visit(std::size_t level, double prefix) {
    if (level == l_.size()) return counts_(prefix) ? 1 : 0;
    if (std::isfinite(threshold_)) {
      if (prefix + max_rest_[level] < threshold_ - margin_) return 0;
      if (prefix + min_rest_[level] > threshold_ + margin_) return pow10_[level];
    }
    long total = 0;
    for (int d = 0; d < 10; ++d) total += visit(level + 1, prefix + l_[level][d]);
    return total;
  }

  const std::vector<DigitRow>& l_;
  Counter counts_;
  std::vector<double> max_rest_, min_rest_;
  std::vector<long> pow10_;
  double threshold_ = 0.0;
  double margin_ = 0.0;
};

}  // namespace

RankResult rank_beam(std::span<const DigitRow> grid, std::span<const int> truth, TieRule rule, int k) {
  validate_grid(grid);
  check_truth(grid, truth);
  const auto l = log_table(grid);
  const Counter counts{rule, score_of(l, truth)};
  const auto best = top_k_candidates(grid, k);
  long in_beam = 0;
  for (const auto& c : best) in_beam += counts(c.score) ? 1 : 0;
  // Every candidate outside the beam scores no higher than the beam's last
  // entry, so a beam that is not saturated holds all counted candidates.
  if (in_beam < static_cast<long>(best.size())) return counts.finish(in_beam, k);
  return counts.finish(BoundedCounter(l, counts).count(), k);
}

RankResult top100(std::span<const DigitRow> grid, std::span<const int> truth, TieRule rule) {
  if (grid.size() != 6) throw Error(ErrorKind::ShapeMismatch, "top100 expects a 6-row grid");
  return rank_beam(grid, truth, rule, 100);
}

}  // namespace pinsight::eval
