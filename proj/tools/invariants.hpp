#pragma once

#include <string>
#include <vector>

namespace pinsight::tools {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast invariant suite behind `pinsight verify`: codec, decompression,
/// feature contract, gradients, ranking, splits and simulator determinism.
/// A non-empty `dataset` adds the on-disk integrity check for that directory.
std::vector<CheckResult> run_invariants(const std::string& dataset = {});

}  // namespace pinsight::tools
