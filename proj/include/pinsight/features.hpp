#pragma once

// The 17-class, 134-column feature catalogue computed per time sample from
// the raw angle indices (V-hat), the decompressed matrices (V-tilde) and the
// reference-normalized matrices (V).

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pinsight/bfi_codec.hpp"
#include "pinsight/preprocess.hpp"
#include "pinsight/trace.hpp"

namespace pinsight::features {

inline constexpr int kFeatureWidth = 134;
inline constexpr int kChannels = 8;
inline constexpr int kPhaseChannels = 6;

enum class Source { Vhat, Vtilde, V };

struct FeatureClass {
  std::string_view name;
  int offset;
  int count;
  Source source;
};

/// Column layout in order; offsets are cumulative.
std::span<const FeatureClass> feature_classes();
const FeatureClass& feature_class(std::string_view name);

/// FNV-1a digest of the column layout; changes whenever the contract does.
std::uint64_t contract_hash();

/// Channel c maps to (tx, stream) = (c / 2, c % 2).
std::array<std::pair<int, int>, kChannels> channel_map();

struct FeatureSeries {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> frames;  // [T x 134]
  int ref_index = 0;

  int length() const { return static_cast<int>(frames.rows()); }
};

struct ExtractOptions {
  int dfs_window = 16;
  int n_select = 5;  // subcarriers per h*/l* class
};

/// Geodesic distance sqrt(sum theta_i^2) between the column spans of two
/// orthonormal n x k matrices. Throws NonOrthonormalInput.
double grassmann_distance(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b,
                          double tolerance = 1e-6);

/// Removes 2*pi jumps so consecutive differences lie in (-pi, pi].
std::vector<double> unwrap_phase(std::span<const double> series);

/// Scores of the centered rows on the leading right singular vector, signed
/// so the largest-magnitude loading is positive. Zero variance gives zeros.
Eigen::VectorXd pca_first_component(const Eigen::MatrixXd& m);

/// Subcarriers chosen for the h*/l* classes, per channel, by temporal variance.
struct SubcarrierSelection {
  std::array<std::vector<int>, kChannels> high_amp, low_amp;
  std::array<std::vector<int>, kPhaseChannels> high_phase, low_phase;
  std::array<std::vector<double>, kChannels> amp_variance;         // per subcarrier
  std::array<std::vector<double>, kPhaseChannels> phase_variance;  // per subcarrier
};

SubcarrierSelection select_subcarriers(std::span<const codec::BfiMatrix> v, int n_select = 5);

FeatureSeries extract(std::span<const codec::AngleReport> vhat,
                      std::span<const codec::BfiMatrix> vtilde,
                      std::span<const codec::BfiMatrix> v, int ref_index,
                      const ExtractOptions& options = {});

/// Per-trace feature series with the labels needed downstream.
struct TraceFeatures {
  std::string id;
  DomainKey domain;
  std::vector<int> digits;
  std::vector<int> keystrokes;
  double sample_rate = 18.0;
  FeatureSeries series;
};

struct FeaturizeOptions {
  bool resample = true;
  double per_digit_duration = 0.8;
  prep::ReferencePolicy policy = prep::ReferencePolicy::Random;
  prep::NormalizeMethod normalize = prep::NormalizeMethod::Division;
  double timing_sigma = 0.0;  // keystroke label jitter applied after extraction
  std::uint64_t seed = 0;
  ExtractOptions extract;
};

/// resample -> reference -> normalize -> extract -> optional timing jitter.
TraceFeatures featurize(const PinTrace& trace, const FeaturizeOptions& options = {});

/// OpenMP over traces when `parallel`, a plain loop otherwise; same output.
std::vector<TraceFeatures> featurize_batch(std::span<const PinTrace> traces,
                                           const FeaturizeOptions& options = {},
                                           bool parallel = true);

}  // namespace pinsight::features
