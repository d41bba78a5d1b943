#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "pinsight/learncore/graph.hpp"

namespace pinsight::learn {

/// Named parameters with stable addresses; iteration order is by name.
class ParamStore {
 public:
  Tensor& add(const std::string& name, std::vector<int> shape);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  std::vector<std::string> names() const;
  std::size_t count() const;  // total scalar parameters
  void zero_grad();
  bool operator==(const ParamStore& other) const;

  std::map<std::string, Tensor>& items() { return params_; }
  const std::map<std::string, Tensor>& items() const { return params_; }

 private:
  std::map<std::string, Tensor> params_;
};

/// Uniform(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))).
void glorot_uniform(Tensor& t, int fan_in, int fan_out, std::mt19937_64& rng);

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  /// Decoupled decay theta -= lr*wd*theta, then the bias-corrected Adam step.
  void step(ParamStore& params);
  std::int64_t steps() const { return t_; }
  const AdamWConfig& config() const { return config_; }

  std::map<std::string, std::vector<double>>& first_moments() { return m_; }
  std::map<std::string, std::vector<double>>& second_moments() { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  AdamWConfig config_;
  std::int64_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

}  // namespace pinsight::learn
