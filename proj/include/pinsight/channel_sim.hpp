#pragma once

// Geometric multipath simulator: a typing hand perturbs the channel between
// a 4-antenna router and a 2-antenna phone, and the phone reports compressed
// beamforming feedback for every channel sounding.

#include <array>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pinsight/bfi_codec.hpp"
#include "pinsight/domain.hpp"
#include "pinsight/trace.hpp"

namespace pinsight::sim {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kSubcarrierSpacing = 312.5e3;
inline constexpr double kMinPathLength = 1e-3;

struct KeypadLayout {
  double pitch_x = 0.023;
  double pitch_y = 0.018;

  /// Key center in the screen plane, origin at '5', +y towards the '123' row.
  Eigen::Vector2d center(int digit) const;
  double distance(int a, int b) const { return (center(a) - center(b)).norm(); }
  KeypadLayout scaled(double factor) const { return {pitch_x * factor, pitch_y * factor}; }
};

Eigen::Vector2d keypad_center(int digit, const KeypadLayout& layout = {});

struct Scene {
  std::uint64_t room_seed = 0;
  double reflector_angle_deg = 0.0;
  double router_position_m = 0.0;  // along the 1 m translation axis
  int channel_id = 44;
  double router_phone_distance = 1.5;
  double snr_db = std::numeric_limits<double>::infinity();  // +inf: noiseless
  int n_env_paths = 6;
  bool foil_reflector = true;  // the rotatable reflector mounted near the station

  /// Replaces the router array center derived from position/distance.
  std::optional<Vec3> router_center_override;
  double router_rotation_deg = 0.0;  // array axis rotation about z
  double router_height = 0.15;
  double router_spacing = 0.035;
  int n_router_antennas = 4;

  std::array<Vec3, 2> phone_antennas = {Vec3(0.035, 0.07, -0.004), Vec3(0.035, -0.07, -0.004)};

  void validate() const;
  /// Center of the 80 MHz block containing `channel_id`, in Hz.
  double center_frequency_hz() const;
  Vec3 router_center() const;
  std::vector<Vec3> router_antennas() const;

  /// Scene of one grid cell; room seeds are derived from `base_seed`.
  static Scene from_domain(const DomainKey& key, std::uint64_t base_seed = 0);
  /// Deterministic digest of every field that influences rendering.
  std::uint64_t seed() const;
};

struct Reflector {
  Vec3 position;
  cplx gain;
};

/// Static single-bounce reflectors of a scene, including the foil when enabled.
std::vector<Reflector> environment(const Scene& scene);

/// Effective gain of the rotatable foil for the current scene geometry.
cplx foil_gain(const Scene& scene);

struct HandModel {
  std::vector<Vec3> scatterer_offsets;
  std::vector<cplx> reflectivities;

  void validate() const;
  HandModel scaled(double factor) const;
  static HandModel default_hand();
};

struct TypingPlan {
  std::array<int, kPinLength> pin{};
  KeypadLayout keypad;
  double lift_height = 0.020;
  double start_height = 0.010;
  double per_digit_duration = 0.8;
  double sample_rate = 18.0;
  double idle_duration = 0.4;  // motionless margin before entry and after exit
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec3> positions;
  std::vector<int> keystrokes;         // sample index nearest to each press
  std::vector<double> keystroke_times;  // continuous press instants
};

/// Constant speed that makes an average inter-key move last per_digit_duration.
double hand_speed(const TypingPlan& plan);

Trajectory plan_trajectory(const TypingPlan& plan);

struct ChannelSample {
  int n_sub = 0;
  int n_tx = 0;  // router antennas
  int n_rx = 0;  // phone antennas
  std::vector<cplx> H;  // [n_sub][n_tx][n_rx]
  std::vector<cplx> Hd, He, Hh;  // empty unless components were requested

  std::size_t index(int s, int t, int r) const {
    return (static_cast<std::size_t>(s) * n_tx + t) * n_rx + r;
  }
  cplx at(int s, int t, int r) const { return H[index(s, t, r)]; }
  bool has_components() const { return !Hd.empty(); }
  /// Phone-side estimate for one subcarrier as an n_rx x n_tx matrix.
  Eigen::MatrixXcd matrix(int s) const;
};

/// Data subcarrier frequencies. 234 gives the VHT80 data-tone map; other
/// counts are spread evenly over the same 80 MHz.
std::vector<double> subcarrier_frequencies(int channel_id, int n_sub = 234);

/// Complex gain of a polyline path through `points`, scaled by `scatter`:
/// product of (1/d) e^{-j 2 pi f d / c} over segments. Throws DegenerateGeometry.
cplx path_gain(std::span<const Vec3> points, double freq, cplx scatter = 1.0);

/// Direct and environment components in ChannelSample layout. They do not
/// depend on the hand, so a trace computes them once.
struct StaticChannel {
  std::vector<cplx> direct;
  std::vector<cplx> environment;
};
StaticChannel static_channel(const Scene& scene, std::span<const double> freqs);

/// Channel for one fingertip position; std::nullopt removes the hand.
/// `cached` must come from static_channel on the same scene and frequencies.
ChannelSample synth_channel(const Scene& scene, const HandModel& hand,
                            const std::optional<Vec3>& fingertip, std::span<const double> freqs,
                            bool keep_components = false, const StaticChannel* cached = nullptr);

/// Right singular vectors of the n_rx x n_tx estimate, first n_stream columns.
Eigen::MatrixXcd feedback_matrix(const Eigen::MatrixXcd& h, int n_stream);

struct RenderOptions {
  codec::Codebook codebook;
  int n_stream = 2;
  bool hand_present = true;  // false renders the hand-removed control
  bool keep_hand_positions = true;
  std::uint64_t noise_seed = 0;
};

PinTrace render_trace(const Scene& scene, const TypingPlan& plan, const HandModel& hand,
                      const RenderOptions& options = {}, const DomainKey& domain = {});

struct RenderJob {
  Scene scene;
  TypingPlan plan;
  DomainKey domain;
  RenderOptions options;
};

/// Renders every job; `parallel` selects the OpenMP loop, otherwise a plain
/// serial loop. Both produce identical traces in job order.
std::vector<PinTrace> render_batch(std::span<const RenderJob> jobs, const HandModel& hand,
                                   bool parallel = true);

}  // namespace pinsight::sim
