#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pinsight/attacks/samples.hpp"
#include "pinsight/learncore/checkpoint.hpp"

namespace pinsight::attacks {

using DigitProbs = std::array<double, 10>;
using DigitDistances = std::array<double, 10>;

enum class Aggregation { Min, Mean };
Aggregation parse_aggregation(const std::string& s);
std::string to_string(Aggregation a);

/// Per-digit template lists of flattened, column-standardized windows.
struct TemplateBank {
  std::array<std::vector<Eigen::VectorXd>, 10> templates;
  Aggregation aggregation = Aggregation::Min;
  int rows = 0;
  int cols = 0;
  Eigen::VectorXd column_mean;   // [cols]
  Eigen::VectorXd column_scale;  // [cols], 1 where a column is constant
};

/// Throws MissingClass unless all ten digits are present.
TemplateBank windtalker_fit(std::span<const Sample> samples, Aggregation aggregation = Aggregation::Min,
                            bool standardize = true);

/// Aggregated Euclidean distance to each class; throws ShapeMismatch.
DigitDistances windtalker_distances(const Eigen::MatrixXd& window, const TemplateBank& bank);

/// softmin(d / tau). A non-positive tau falls back to the median nonzero
/// distance of this vector, or 1 when every distance is zero.
DigitProbs softmin(const DigitDistances& d, double tau = 0.0);

/// Median of the nonzero entries over every keystroke's distance vector.
double median_nonzero(std::span<const DigitDistances> rows);

DigitProbs windtalker_predict(const Eigen::MatrixXd& window, const TemplateBank& bank);

/// The trace's six distance vectors share one temperature.
std::vector<DigitProbs> windtalker_predict_trace(std::span<const Sample> keystrokes, const TemplateBank& bank,
                                                 bool parallel = true);

/// Templates travel in the checkpoint container as one [n x rows*cols]
/// tensor per digit; config_json carries {"kind":"windtalker", ...}.
learn::Checkpoint bank_to_checkpoint(const TemplateBank& bank);
TemplateBank bank_from_checkpoint(const learn::Checkpoint& ck);

}  // namespace pinsight::attacks
