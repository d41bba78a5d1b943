#include "pinsight/trace.hpp"

#include "pinsight/error.hpp"

namespace pinsight {

void PinTrace::validate() const {
  const int T = length();
  if (!reports.empty() && static_cast<int>(reports.size()) != T)
    throw Error(ErrorKind::ShapeMismatch, "reports and matrices differ in length");
  if (keystrokes.size() != digits.size())
    throw Error(ErrorKind::ShapeMismatch, "one keystroke per digit required");
  for (std::size_t i = 0; i < keystrokes.size(); ++i) {
    if (keystrokes[i] < 0 || keystrokes[i] >= T)
      throw Error(ErrorKind::IndexOutOfRange, "keystroke outside trace");
    if (i > 0 && keystrokes[i] <= keystrokes[i - 1])
      throw Error(ErrorKind::InvalidConfig, "keystrokes must be strictly increasing");
    if (digits[i] < 0 || digits[i] > 9) throw Error(ErrorKind::InvalidConfig, "digit not in 0..9");
  }
  if (!hand_positions.empty() && static_cast<int>(hand_positions.size()) != T)
    throw Error(ErrorKind::ShapeMismatch, "hand positions must cover every sample");
  if (!(sample_rate > 0)) throw Error(ErrorKind::InvalidConfig, "sample rate must be positive");
}

}  // namespace pinsight
