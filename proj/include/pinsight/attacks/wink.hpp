#pragma once

// Training-free PIN ranking from keystroke self-similarity and typing rhythm.
//
// For a candidate PIN p the penalty is
//   alpha * C(p) + (1 - alpha) * T(p)
// where C averages, over the 15 keystroke pairs, delta_ij when p_i == p_j and
// 1 - delta_ij otherwise, and T is sum_i |t_i - kappa * x_i| / sum_i t_i with
// x_i = lift_allowance + keypad_distance(p_i, p_i+1) and kappa >= 0 the least
// squares fit of t on x. delta_ij = 1 - exp(-D_ij^2 / (2 s^2)), D being the
// distance between per-trace standardized keystroke frames and s the median
// distance between frames of the same trace.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "pinsight/channel_sim.hpp"
#include "pinsight/features.hpp"

namespace pinsight::attacks {

inline constexpr int kPinCount = 1000000;

using Pin = std::array<int, 6>;
Pin pin_from_index(int index);
int pin_index(const Pin& pin);

struct WinkConfig {
  double alpha = 0.5;
  double lift_allowance = 0.04;  // metres of vertical travel per keystroke
  sim::KeypadLayout layout;
};

/// Everything a candidate score depends on.
struct WinkEvidence {
  std::array<std::array<double, 6>, 6> delta{};  // pairwise dissimilarity in [0, 1]
  std::array<double, 5> travel{};                // seconds between keystrokes
  bool degenerate = false;                       // identical frames and equal travel times
};

WinkEvidence wink_evidence(const features::TraceFeatures& trace);

/// Penalty of one candidate (lower is better).
double wink_penalty(const WinkEvidence& ev, const Pin& pin, const WinkConfig& config = {});

/// Scores (negated penalties) of all 10^6 candidates, indexed by pin_index.
std::vector<double> wink_scores(const WinkEvidence& ev, const WinkConfig& config = {}, bool parallel = true);

struct RankedPin {
  int index;
  double score;
};

/// Best `top_k` candidates, highest score first, ties by ascending PIN.
std::vector<RankedPin> wink_rank(const WinkEvidence& ev, const WinkConfig& config = {}, int top_k = kPinCount,
                                 bool parallel = true);

}  // namespace pinsight::attacks
