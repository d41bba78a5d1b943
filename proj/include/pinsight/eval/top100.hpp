#pragma once

// PIN ranking by the product of per-digit probabilities. Scores are summed
// log-probabilities accumulated left to right, the same way in every
// implementation, so brute force and beam see bit-identical values. Two
// candidates whose scores differ by at most kTieTolerance are tied.

#include <array>
#include <span>
#include <string>
#include <vector>

namespace pinsight::eval {

using DigitRow = std::array<double, 10>;

inline constexpr double kTieTolerance = 1e-9;

enum class TieRule {
  StrictlyBetter,  // rank = 1 + #candidates scoring above the truth
  BetterOrEqual,   // rank = #candidates scoring at least as high (truth included)
};
std::string to_string(TieRule r);
TieRule parse_tie_rule(const std::string& s);

struct RankResult {
  bool hit = false;
  long rank = 0;
  bool operator==(const RankResult&) const = default;
};

/// Throws InvalidDistribution unless every row is finite, non-negative and sums to 1 within 1e-6.
void validate_grid(std::span<const DigitRow> grid);

/// sum_i log p_i(pin_i), accumulated left to right.
double pin_log_score(std::span<const DigitRow> grid, std::span<const int> pin);

/// Reference: scores every 10^n candidate (n <= 7). OpenMP when `parallel`.
RankResult rank_bruteforce(std::span<const DigitRow> grid, std::span<const int> truth,
                           TieRule rule = TieRule::StrictlyBetter, int k = 100, bool parallel = true);

struct Candidate {
  std::vector<int> digits;
  double score;
};

/// Exact k best candidates by beam search, best first, ties by ascending digits.
std::vector<Candidate> top_k_candidates(std::span<const DigitRow> grid, int k = 100);

/// Beam for the top-k region, bounded counting beyond it; agrees with brute force.
RankResult rank_beam(std::span<const DigitRow> grid, std::span<const int> truth,
                     TieRule rule = TieRule::StrictlyBetter, int k = 100);

/// Six-digit convenience wrapper around rank_beam.
RankResult top100(std::span<const DigitRow> grid, std::span<const int> truth,
                  TieRule rule = TieRule::StrictlyBetter);

}  // namespace pinsight::eval
