#include "pinsight/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pinsight/error.hpp"

namespace pinsight::prep {

namespace {

codec::BfiMatrix lerp(const codec::BfiMatrix& a, const codec::BfiMatrix& b, double w) {
  codec::BfiMatrix out(a.n_sub, a.n_tx, a.n_stream);
  for (std::size_t i = 0; i < a.values.size(); ++i)
    out.values[i] = (1.0 - w) * a.values[i] + w * b.values[i];
  return out;
}

}  // namespace

PinTrace resample_uniform(const PinTrace& trace, int gap) {
  if (trace.keystrokes.empty())
    throw Error(ErrorKind::MissingTimingInfo, "trace has no keystroke timing");
  if (gap < 1) throw Error(ErrorKind::InvalidConfig, "target gap must be >= 1");
  trace.validate();
  const auto& k = trace.keystrokes;
  const int n_keys = static_cast<int>(k.size());
  const int T = trace.length();
  const int head = k.front();
  const int tail = T - 1 - k.back();
  const int T_out = head + (n_keys - 1) * gap + tail + 1;

  // Source position of output sample u as an exact fraction num/den.
  auto source = [&](int u, long& base, long& num, long& den) {
    const int last_out = head + (n_keys - 1) * gap;
    if (u <= head) {
      base = u, num = 0, den = 1;
    } else if (u >= last_out) {
      base = k.back() + (u - last_out), num = 0, den = 1;
    } else {
      const int seg = (u - head) / gap;
      const long off = (u - head) - static_cast<long>(seg) * gap;
      const long span = k[seg + 1] - k[seg];
      const long scaled = off * span;
      base = k[seg] + scaled / gap;
      num = scaled % gap;
      den = gap;
    }
  };

  PinTrace out = trace;
  out.matrices.clear();
  out.reports.clear();
  out.hand_positions.clear();
  out.matrices.reserve(T_out);
  for (int u = 0; u < T_out; ++u) {
    long base, num, den;
    source(u, base, num, den);
    const double w = static_cast<double>(num) / den;
    if (num == 0)
      out.matrices.push_back(trace.matrices[base]);
    else
      out.matrices.push_back(lerp(trace.matrices[base], trace.matrices[base + 1], w));
    if (!trace.reports.empty())
      out.reports.push_back(trace.reports[2 * num >= den && num != 0 ? base + 1 : base]);
    if (!trace.hand_positions.empty()) {
      const auto& p = trace.hand_positions[base];
      out.hand_positions.push_back(num == 0 ? p : p + w * (trace.hand_positions[base + 1] - p));
    }
  }
  for (int i = 0; i < n_keys; ++i) out.keystrokes[i] = head + i * gap;
  return out;
}

PinTrace resample_uniform(const PinTrace& trace, double per_digit_duration) {
  return resample_uniform(trace,
                          static_cast<int>(std::lround(per_digit_duration * trace.sample_rate)));
}

PinTrace perturb_timing(const PinTrace& trace, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0)) throw Error(ErrorKind::InvalidConfig, "sigma must be >= 0");
  PinTrace out = trace;
  if (sigma == 0) return out;
  std::mt19937_64 rng(mix_seed(seed, 0x71e));
  std::normal_distribution<double> normal(0.0, sigma);
  const int T = trace.length();
  const int n = static_cast<int>(out.keystrokes.size());
  int prev = -1;
  for (int i = 0; i < n; ++i) {
    const int shifted = out.keystrokes[i] + static_cast<int>(std::lround(normal(rng)));
    const int hi = T - (n - i);
    out.keystrokes[i] = std::clamp(shifted, prev + 1, std::max(prev + 1, hi));
    prev = out.keystrokes[i];
  }
  return out;
}

ReferencePolicy parse_policy(std::string_view name) {
  if (name == "random") return ReferencePolicy::Random;
  if (name == "first") return ReferencePolicy::First;
  if (name == "hand_far") return ReferencePolicy::HandFar;
  if (name == "leaky_digit5") return ReferencePolicy::LeakyDigit5;
  throw Error(ErrorKind::InvalidConfig, "unknown reference policy '" + std::string(name) + "'");
}

std::string_view to_string(ReferencePolicy policy) {
  switch (policy) {
    case ReferencePolicy::Random: return "random";
    case ReferencePolicy::First: return "first";
    case ReferencePolicy::HandFar: return "hand_far";
    case ReferencePolicy::LeakyDigit5: return "leaky_digit5";
  }
  return "?";
}

int select_reference(const PinTrace& trace, ReferencePolicy policy, std::uint64_t seed) {
  const int T = trace.length();
  if (T < 1) throw Error(ErrorKind::PolicyUnsatisfiable, "empty trace");
  switch (policy) {
    case ReferencePolicy::First: return 0;
    case ReferencePolicy::Random: {
      std::mt19937_64 rng(mix_seed(seed, 0x4ef));
      return std::uniform_int_distribution<int>(0, T - 1)(rng);
    }
    case ReferencePolicy::HandFar: {
      if (trace.hand_positions.empty())
        throw Error(ErrorKind::PolicyUnsatisfiable, "hand_far needs hand positions");
      int best = 0;
      for (int t = 1; t < T; ++t)
        if (trace.hand_positions[t].z() > trace.hand_positions[best].z()) best = t;
      return best;
    }
    case ReferencePolicy::LeakyDigit5:
      for (std::size_t i = 0; i < trace.digits.size(); ++i)
        if (trace.digits[i] == 5) return trace.keystrokes[i];
      throw Error(ErrorKind::PolicyUnsatisfiable, "PIN contains no digit 5");
  }
  throw Error(ErrorKind::InvalidConfig, "unknown reference policy");
}

NormalizeMethod parse_normalize(std::string_view name) {
  if (name == "division") return NormalizeMethod::Division;
  if (name == "subtraction") return NormalizeMethod::Subtraction;
  throw Error(ErrorKind::InvalidConfig, "unknown normalization '" + std::string(name) + "'");
}

std::string_view to_string(NormalizeMethod method) {
  return method == NormalizeMethod::Division ? "division" : "subtraction";
}

std::vector<codec::BfiMatrix> normalize(const std::vector<codec::BfiMatrix>& matrices,
                                        int ref_index, NormalizeMethod method) {
  if (ref_index < 0 || ref_index >= static_cast<int>(matrices.size()))
    throw Error(ErrorKind::IndexOutOfRange, "reference index outside trace");
  const auto& ref = matrices[ref_index];
  std::vector<codec::cplx> divisor(ref.values);
  for (auto& d : divisor) {
    const double mag = std::abs(d);
    if (mag < kNormalizeEpsilon) d = mag > 0 ? d * (kNormalizeEpsilon / mag) : kNormalizeEpsilon;
  }
  std::vector<codec::BfiMatrix> out;
  out.reserve(matrices.size());
  for (std::size_t t = 0; t < matrices.size(); ++t) {
    const auto& m = matrices[t];
    if (m.values.size() != ref.values.size())
      throw Error(ErrorKind::ShapeMismatch, "matrix shapes differ over time");
    codec::BfiMatrix v(m.n_sub, m.n_tx, m.n_stream);
    if (static_cast<int>(t) == ref_index) {
      std::fill(v.values.begin(), v.values.end(),
                method == NormalizeMethod::Division ? codec::cplx(1.0) : codec::cplx(0.0));
    } else if (method == NormalizeMethod::Division) {
      for (std::size_t i = 0; i < m.values.size(); ++i) v.values[i] = m.values[i] / divisor[i];
    } else {
      for (std::size_t i = 0; i < m.values.size(); ++i) v.values[i] = m.values[i] - ref.values[i];
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<Segment> segment(const Eigen::MatrixXd& series, const PinTrace& trace, int W) {
  if (W < 0 || W > kMaxContext) throw Error(ErrorKind::InvalidConfig, "W must lie in [0, 40]");
  const int T = static_cast<int>(series.rows());
  if (T != trace.length()) throw Error(ErrorKind::ShapeMismatch, "series length != trace length");
  std::vector<Segment> out;
  const int n = static_cast<int>(trace.keystrokes.size());
  for (int i = 0; i < n; ++i) {
    const int k = trace.keystrokes[i];
    const int lo = std::max(0, k - W), hi = std::min(T - 1, k + W);
    Segment s;
    s.frames = series.middleRows(lo, hi - lo + 1);
    s.center_digit = trace.digits[i];
    s.context = W;
    s.start = lo;
    s.center_offset = k - lo;
    s.key_index = i;
    s.prev_digit = i > 0 ? trace.digits[i - 1] : -1;
    s.next_digit = i + 1 < n ? trace.digits[i + 1] : -1;
    s.domain = trace.domain;
    out.push_back(std::move(s));
  }
  return out;
}

Eigen::MatrixXd padded_window(const Eigen::MatrixXd& series, int center, int W) {
  const int T = static_cast<int>(series.rows());
  if (T == 0) throw Error(ErrorKind::ShapeMismatch, "empty series");
  Eigen::MatrixXd out(2 * W + 1, series.cols());
  for (int r = 0; r <= 2 * W; ++r) out.row(r) = series.row(std::clamp(center - W + r, 0, T - 1));
  return out;
}

}  // namespace pinsight::prep
