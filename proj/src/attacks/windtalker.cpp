#include "pinsight/attacks/windtalker.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include "json.hpp"

#include "pinsight/error.hpp"

namespace pinsight::attacks {

Aggregation parse_aggregation(const std::string& s) {
  if (s == "min") return Aggregation::Min;
  if (s == "mean") return Aggregation::Mean;
  throw Error(ErrorKind::InvalidConfig, "unknown aggregation '" + s + "'");
}

std::string to_string(Aggregation a) { return a == Aggregation::Min ? "min" : "mean"; }

namespace {

Eigen::VectorXd standardized(const Eigen::MatrixXd& window, const TemplateBank& bank) {
  Eigen::MatrixXd z = window;
  for (int c = 0; c < z.cols(); ++c) z.col(c) = (z.col(c).array() - bank.column_mean[c]) / bank.column_scale[c];
  return flatten(z);
}

}  // namespace

TemplateBank windtalker_fit(std::span<const Sample> samples, Aggregation aggregation, bool standardize) {
  std::array<int, 10> counts{};
  for (const auto& s : samples) {
    if (s.digit < 0 || s.digit > 9) throw Error(ErrorKind::IndexOutOfRange, "digit label");
    ++counts[s.digit];
  }
  for (int d = 0; d < 10; ++d)
    if (counts[d] == 0)
      throw Error(ErrorKind::MissingClass, "no training segment for digit " + std::to_string(d));

  TemplateBank bank;
  bank.aggregation = aggregation;
  bank.rows = static_cast<int>(samples.front().window.rows());
  bank.cols = static_cast<int>(samples.front().window.cols());
  bank.column_mean = Eigen::VectorXd::Zero(bank.cols);
  bank.column_scale = Eigen::VectorXd::Ones(bank.cols);
  for (const auto& s : samples)
    if (s.window.rows() != bank.rows || s.window.cols() != bank.cols)
      throw Error(ErrorKind::ShapeMismatch, "training windows differ in shape");

  if (standardize) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(bank.cols), sq = Eigen::VectorXd::Zero(bank.cols);
    double n = 0;
    for (const auto& s : samples) {
      sum += s.window.colwise().sum().transpose();
      sq += s.window.array().square().colwise().sum().matrix().transpose();
      n += static_cast<double>(s.window.rows());
    }
    bank.column_mean = sum / n;
    for (int c = 0; c < bank.cols; ++c) {
      const double var = std::max(sq[c] / n - bank.column_mean[c] * bank.column_mean[c], 0.0);
      bank.column_scale[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
  }
  for (const auto& s : samples)
    bank.templates[s.digit].push_back(standardized(s.window, bank));
  return bank;
}

DigitDistances windtalker_distances(const Eigen::MatrixXd& window, const TemplateBank& bank) {
  if (window.rows() != bank.rows || window.cols() != bank.cols)
    throw Error(ErrorKind::ShapeMismatch, "window " + std::to_string(window.rows()) + "x" +
                                              std::to_string(window.cols()) + " vs bank " +
                                              std::to_string(bank.rows) + "x" + std::to_string(bank.cols));
  const Eigen::VectorXd z = standardized(window, bank);
  DigitDistances d{};
  for (int c = 0; c < 10; ++c) {
    const auto& list = bank.templates[c];
    if (list.empty()) throw Error(ErrorKind::MissingClass, "empty template class " + std::to_string(c));
    double agg = bank.aggregation == Aggregation::Min ? std::numeric_limits<double>::infinity() : 0.0;
    for (const auto& t : list) {
      const double dist = (z - t).norm();
      agg = bank.aggregation == Aggregation::Min ? std::min(agg, dist) : agg + dist;
    }
    if (bank.aggregation == Aggregation::Mean) agg /= static_cast<double>(list.size());
    d[c] = agg;
  }
  return d;
}

double median_nonzero(std::span<const DigitDistances> rows) {
  std::vector<double> v;
  for (const auto& r : rows)
    for (double x : r)
      if (x > 0.0) v.push_back(x);
  if (v.empty()) return 1.0;
  const auto mid = v.begin() + static_cast<long>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

DigitProbs softmin(const DigitDistances& d, double tau) {
  if (!(tau > 0.0)) tau = median_nonzero(std::span<const DigitDistances>(&d, 1));
  const double lo = *std::min_element(d.begin(), d.end());
  DigitProbs p{};
  double s = 0.0;
  for (int c = 0; c < 10; ++c) s += p[c] = std::exp(-(d[c] - lo) / tau);
  for (auto& x : p) x /= s;
  return p;
}

DigitProbs windtalker_predict(const Eigen::MatrixXd& window, const TemplateBank& bank) {
  return softmin(windtalker_distances(window, bank));
}

std::vector<DigitProbs> windtalker_predict_trace(std::span<const Sample> keystrokes, const TemplateBank& bank,
                                                 bool parallel) {
  const long n = static_cast<long>(keystrokes.size());
  std::vector<DigitDistances> d(keystrokes.size());
  std::vector<std::exception_ptr> errors(keystrokes.size());
#pragma omp parallel for if (parallel)
  for (long i = 0; i < n; ++i) {
    try {
      d[i] = windtalker_distances(keystrokes[i].window, bank);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  const double tau = median_nonzero(d);
  std::vector<DigitProbs> out;
  for (const auto& row : d) out.push_back(softmin(row, tau));
  return out;
}

learn::Checkpoint bank_to_checkpoint(const TemplateBank& bank) {
  learn::Checkpoint ck;
  const int width = bank.rows * bank.cols;
  for (int d = 0; d < 10; ++d) {
    const auto& list = bank.templates[d];
    auto& t = ck.params.add("templates." + std::to_string(d), {static_cast<int>(list.size()), width});
    for (std::size_t i = 0; i < list.size(); ++i)
      std::copy(list[i].data(), list[i].data() + width, t.values.begin() + static_cast<long>(i) * width);
  }
  auto& mean = ck.params.add("stats.mean", {bank.cols});
  auto& scale = ck.params.add("stats.scale", {bank.cols});
  for (int c = 0; c < bank.cols; ++c) {
    mean.values[c] = bank.column_mean[c];
    scale.values[c] = bank.column_scale[c];
  }
  nlohmann::json j = {{"kind", "windtalker"}, {"aggregation", to_string(bank.aggregation)},
                      {"rows", bank.rows}, {"cols", bank.cols}};
  ck.config_json = j.dump();
  return ck;
}

TemplateBank bank_from_checkpoint(const learn::Checkpoint& ck) {
  TemplateBank bank;
  try {
    const auto j = nlohmann::json::parse(ck.config_json);
    if (j.at("kind") != "windtalker") throw Error(ErrorKind::InvalidConfig, "checkpoint does not hold templates");
    bank.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
    bank.rows = j.at("rows").get<int>();
    bank.cols = j.at("cols").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptHeader, std::string("template checkpoint: ") + e.what());
  }
  const int width = bank.rows * bank.cols;
  for (int d = 0; d < 10; ++d) {
    const auto& t = ck.params.get("templates." + std::to_string(d));
    if (t.rank() != 2 || t.dim(1) != width) throw Error(ErrorKind::ShapeMismatch, "template tensor shape");
    for (int i = 0; i < t.dim(0); ++i)
      bank.templates[d].push_back(Eigen::Map<const Eigen::VectorXd>(t.values.data() + static_cast<long>(i) * width, width));
  }
  const auto& mean = ck.params.get("stats.mean");
  const auto& scale = ck.params.get("stats.scale");
  if (static_cast<int>(mean.size()) != bank.cols || static_cast<int>(scale.size()) != bank.cols)
    throw Error(ErrorKind::ShapeMismatch, "template statistics shape");
  bank.column_mean = Eigen::Map<const Eigen::VectorXd>(mean.values.data(), bank.cols);
  bank.column_scale = Eigen::Map<const Eigen::VectorXd>(scale.values.data(), bank.cols);
  return bank;
}

}  // namespace pinsight::attacks
