#include "pinsight/learncore/optim.hpp"

#include <cmath>

#include "pinsight/error.hpp"

namespace pinsight::learn {

Tensor& ParamStore::add(const std::string& name, std::vector<int> shape) {
  auto [it, inserted] = params_.try_emplace(name, Tensor(std::move(shape)));
  if (!inserted) throw Error(ErrorKind::InvalidConfig, "duplicate parameter " + name);
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorKind::InvalidConfig, "unknown parameter " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorKind::InvalidConfig, "unknown parameter " + name);
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : params_) out.push_back(k);
  return out;
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (auto a = params_.begin(), b = other.params_.begin(); a != params_.end(); ++a, ++b)
    if (a->first != b->first || a->second.shape != b->second.shape || a->second.values != b->second.values)
      return false;
  return true;
}

void glorot_uniform(Tensor& t, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (auto& v : t.values) v = u(rng);
}

void AdamW::step(ParamStore& params) {
  ++t_;
  const auto& c = config_;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params.items()) {
    if (p.grad.size() != p.values.size()) p.grad.assign(p.values.size(), 0.0);
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.size() != p.values.size()) {
      m.assign(p.values.size(), 0.0);
      v.assign(p.values.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const double g = p.grad[i];
      p.values[i] -= c.lr * c.weight_decay * p.values[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      p.values[i] -= c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
    }
  }
}

}  // namespace pinsight::learn
