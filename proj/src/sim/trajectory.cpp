#include <cmath>
#include <random>

#include "pinsight/channel_sim.hpp"
#include "pinsight/error.hpp"

namespace pinsight::sim {

Eigen::Vector2d KeypadLayout::center(int digit) const {
  if (digit < 0 || digit > 9) throw Error(ErrorKind::InvalidConfig, "digit not in 0..9");
  if (digit == 0) return {0.0, -2.0 * pitch_y};
  const int row = (digit - 1) / 3;  // 0 for 123
  const int col = (digit - 1) % 3;
  return {(col - 1) * pitch_x, (1 - row) * pitch_y};
}

Eigen::Vector2d keypad_center(int digit, const KeypadLayout& layout) {
  return layout.center(digit);
}

void TypingPlan::validate() const {
  for (int d : pin)
    if (d < 0 || d > 9) throw Error(ErrorKind::InvalidConfig, "PIN digit not in 0..9");
  if (!(keypad.pitch_x > 0) || !(keypad.pitch_y > 0))
    throw Error(ErrorKind::InvalidConfig, "keypad pitch must be positive");
  if (!(lift_height > 0)) throw Error(ErrorKind::InvalidConfig, "lift_height must be positive");
  if (!(start_height > 0) || start_height > lift_height)
    throw Error(ErrorKind::InvalidConfig, "start_height must lie in (0, lift_height]");
  if (!(per_digit_duration > 0))
    throw Error(ErrorKind::InvalidConfig, "per_digit_duration must be positive");
  if (!(sample_rate > 0)) throw Error(ErrorKind::InvalidConfig, "sample_rate must be positive");
  if (!(idle_duration >= 0)) throw Error(ErrorKind::InvalidConfig, "idle_duration must be >= 0");
}

namespace {

double move_length(const TypingPlan& plan, int a, int b) {
  return 2.0 * plan.lift_height + plan.keypad.distance(a, b);
}

struct Waypoint {
  double t;
  Vec3 p;
};

class Polyline {
 public:
  Polyline(Vec3 start, double speed) : speed_(speed) { pts_.push_back({0.0, start}); }

  void move_to(const Vec3& p) {
    const double d = (p - pts_.back().p).norm();
    pts_.push_back({pts_.back().t + d / speed_, p});
  }
  void hold(double seconds) { pts_.push_back({pts_.back().t + seconds, pts_.back().p}); }
  double now() const { return pts_.back().t; }

  Vec3 at(double t) const {
    if (t <= pts_.front().t) return pts_.front().p;
    while (cursor_ + 1 < pts_.size() && pts_[cursor_ + 1].t < t) ++cursor_;
    if (cursor_ + 1 >= pts_.size()) return pts_.back().p;
    const auto& a = pts_[cursor_];
    const auto& b = pts_[cursor_ + 1];
    const double span = b.t - a.t;
    if (span <= 0) return b.p;
    const double w = (t - a.t) / span;
    return a.p + w * (b.p - a.p);
  }

 private:
  std::vector<Waypoint> pts_;
  double speed_;
  mutable std::size_t cursor_ = 0;
};

}  // namespace

double hand_speed(const TypingPlan& plan) {
  double total = 0.0;
  for (int a = 0; a < 10; ++a)
    for (int b = 0; b < 10; ++b) total += move_length(plan, a, b);
  return total / 100.0 / plan.per_digit_duration;
}

Trajectory plan_trajectory(const TypingPlan& plan) {
  plan.validate();
  std::mt19937_64 rng(mix_seed(plan.rng_seed, 0x7a11));
  const auto& kp = plan.keypad;
  std::uniform_real_distribution<double> ux(-1.5 * kp.pitch_x, 1.5 * kp.pitch_x);
  std::uniform_real_distribution<double> uy(-2.5 * kp.pitch_y, 1.5 * kp.pitch_y);
  const Vec3 entry(ux(rng), uy(rng), plan.start_height);
  const Vec3 exit(ux(rng), uy(rng), plan.start_height);

  auto key = [&](int digit, double z) {
    const auto c = kp.center(digit);
    return Vec3(c.x(), c.y(), z);
  };

  Polyline path(entry, hand_speed(plan));
  path.hold(plan.idle_duration);
  path.move_to(key(plan.pin[0], plan.start_height));
  path.move_to(key(plan.pin[0], 0.0));

  Trajectory out;
  out.keystroke_times.push_back(path.now());
  for (int i = 1; i < kPinLength; ++i) {
    path.move_to(key(plan.pin[i - 1], plan.lift_height));
    if (plan.pin[i] != plan.pin[i - 1]) path.move_to(key(plan.pin[i], plan.lift_height));
    path.move_to(key(plan.pin[i], 0.0));
    out.keystroke_times.push_back(path.now());
  }
  path.move_to(key(plan.pin.back(), plan.start_height));
  path.move_to(exit);
  path.hold(plan.idle_duration);

  const int n = static_cast<int>(std::floor(path.now() * plan.sample_rate)) + 1;
  out.times.resize(n);
  out.positions.resize(n);
  for (int i = 0; i < n; ++i) {
    out.times[i] = i / plan.sample_rate;
    out.positions[i] = path.at(out.times[i]);
  }
  for (double t : out.keystroke_times) {
    const int k = static_cast<int>(std::lround(t * plan.sample_rate));
    if (!out.keystrokes.empty() && k <= out.keystrokes.back())
      throw Error(ErrorKind::InvalidConfig,
                  "keystrokes collide at this sample rate; raise lift_height or sample_rate");
    out.keystrokes.push_back(std::min(k, n - 1));
  }
  return out;
}

}  // namespace pinsight::sim
