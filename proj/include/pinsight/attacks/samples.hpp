#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pinsight/domain.hpp"
#include "pinsight/features.hpp"

namespace pinsight::attacks {

/// One keystroke: a fixed-length feature window plus its labels.
struct Sample {
  Eigen::MatrixXd window;  // [(2W+1) x 134], edge-replicated at trace borders
  int digit = 0;
  int prev_digit = -1;
  int next_digit = -1;
  std::optional<DomainKey> domain;
  std::string trace_id;
  int key_index = 0;
};

/// Six samples per trace, centred on the (possibly jittered) keystrokes.
std::vector<Sample> make_samples(const features::TraceFeatures& trace, int W);
std::vector<Sample> make_samples(std::span<const features::TraceFeatures> traces, int W);

/// Row-major flattening used by every distance computation.
Eigen::VectorXd flatten(const Eigen::MatrixXd& window);

}  // namespace pinsight::attacks
