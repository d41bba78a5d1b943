#include "pinsight/attacks/samples.hpp"

#include "pinsight/error.hpp"
#include "pinsight/preprocess.hpp"

namespace pinsight::attacks {

std::vector<Sample> make_samples(const features::TraceFeatures& trace, int W) {
  if (W < 0 || W > 40) throw Error(ErrorKind::InvalidConfig, "context window W must be in [0, 40]");
  if (trace.keystrokes.size() != trace.digits.size() || trace.keystrokes.empty())
    throw Error(ErrorKind::MissingTimingInfo, "trace " + trace.id + " has no keystroke labels");
  const Eigen::MatrixXd series = trace.series.frames;
  std::vector<Sample> out;
  const int n = static_cast<int>(trace.digits.size());
  for (int i = 0; i < n; ++i) {
    const int k = trace.keystrokes[i];
    if (k < 0 || k >= series.rows()) throw Error(ErrorKind::IndexOutOfRange, "keystroke outside trace " + trace.id);
    Sample s;
    s.window = prep::padded_window(series, k, W);
    s.digit = trace.digits[i];
    s.prev_digit = i > 0 ? trace.digits[i - 1] : -1;
    s.next_digit = i + 1 < n ? trace.digits[i + 1] : -1;
    s.domain = trace.domain;
    s.trace_id = trace.id;
    s.key_index = i;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> make_samples(std::span<const features::TraceFeatures> traces, int W) {
  std::vector<Sample> out;
  for (const auto& t : traces) {
    auto s = make_samples(t, W);
    out.insert(out.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  return out;
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& window) {
  Eigen::VectorXd v(window.size());
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), window.rows(),
                                                                                       window.cols()) = window;
  return v;
}

}  // namespace pinsight::attacks
