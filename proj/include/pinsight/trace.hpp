#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pinsight/bfi_codec.hpp"
#include "pinsight/domain.hpp"

namespace pinsight {

inline constexpr int kPinLength = 6;

/// One labeled PIN entry: raw angle reports, their decompressed matrices,
/// keystroke sample indices and digit labels.
struct PinTrace {
  std::string id;
  std::vector<codec::AngleReport> reports;  // V-hat over T
  std::vector<codec::BfiMatrix> matrices;   // V-tilde over T
  std::vector<int> keystrokes;              // strictly increasing sample indices
  std::vector<int> digits;
  DomainKey domain;
  double sample_rate = 18.0;
  std::vector<Eigen::Vector3d> hand_positions;  // optional ground truth, empty if unknown
  std::uint64_t scene_seed = 0;
  std::uint64_t plan_seed = 0;

  int length() const { return static_cast<int>(matrices.size()); }
  /// Throws ShapeMismatch / InvalidConfig when the label invariants fail.
  void validate() const;
};

}  // namespace pinsight
