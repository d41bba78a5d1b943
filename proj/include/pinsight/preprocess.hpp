#pragma once

// Trace conditioning before feature extraction: keystroke-anchored time
// warping, timing jitter, reference choice and normalization, and windowing
// around keystrokes.

#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "pinsight/trace.hpp"

namespace pinsight::prep {

inline constexpr int kMaxContext = 40;
inline constexpr double kNormalizeEpsilon = 1e-6;

/// Time-warps the trace so consecutive keystrokes are exactly `gap` samples
/// apart. Samples before the first and after the last keystroke keep their
/// spacing. Throws MissingTimingInfo without keystrokes.
PinTrace resample_uniform(const PinTrace& trace, int gap);

/// Gap of round(per_digit_duration * sample_rate) samples.
PinTrace resample_uniform(const PinTrace& trace, double per_digit_duration = 0.8);

/// Shifts each keystroke by round(N(0, sigma^2)) and clamps so the indices
/// stay strictly increasing inside the trace.
PinTrace perturb_timing(const PinTrace& trace, double sigma, std::uint64_t seed);

enum class ReferencePolicy { Random, First, HandFar, LeakyDigit5 };

ReferencePolicy parse_policy(std::string_view name);
std::string_view to_string(ReferencePolicy policy);

int select_reference(const PinTrace& trace, ReferencePolicy policy, std::uint64_t seed);

enum class NormalizeMethod { Division, Subtraction };

NormalizeMethod parse_normalize(std::string_view name);
std::string_view to_string(NormalizeMethod method);

/// V[t] = V~[t] / V~[ref] element-wise (divisor magnitude clamped at 1e-6),
/// or V~[t] - V~[ref] for the subtraction variant.
std::vector<codec::BfiMatrix> normalize(const std::vector<codec::BfiMatrix>& matrices,
                                        int ref_index,
                                        NormalizeMethod method = NormalizeMethod::Division);

struct Segment {
  Eigen::MatrixXd frames;  // [L x channels], L = 2W+1 clipped to the trace
  int center_digit = 0;
  int context = 0;
  int start = 0;          // trace index of frames.row(0)
  int center_offset = 0;  // row of the keystroke inside frames
  int key_index = 0;      // position inside the PIN
  int prev_digit = -1;    // -1 at the PIN boundary
  int next_digit = -1;
  DomainKey domain;
};

/// Six keystroke-centred windows over a [T x channels] series.
std::vector<Segment> segment(const Eigen::MatrixXd& series, const PinTrace& trace, int W);

/// Fixed-length [(2W+1) x channels] window; rows outside the series repeat
/// the nearest edge row.
Eigen::MatrixXd padded_window(const Eigen::MatrixXd& series, int center, int W);

}  // namespace pinsight::prep
