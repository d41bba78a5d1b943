#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "pinsight/attacks/samples.hpp"
#include "pinsight/attacks/windtalker.hpp"
#include "pinsight/learncore/checkpoint.hpp"
#include "pinsight/learncore/graph.hpp"
#include "pinsight/learncore/optim.hpp"

namespace pinsight::attacks {

enum class DaMethod { None, Dann, Mmd, Contrastive };
enum class DomainDef { None, Physical, Context, Both };

DaMethod parse_da_method(const std::string& s);
DomainDef parse_domain_def(const std::string& s);
std::string to_string(DaMethod m);
std::string to_string(DomainDef d);

struct ConvLayer {
  int filters = 32;
  int kernel = 5;
  int stride = 1;
};

struct ModelConfig {
  std::vector<ConvLayer> conv = {{32, 5, 1}, {64, 5, 2}, {64, 5, 2}};
  int embedding = 64;
  int domain_hidden = 32;
  double dropout = 0.2;
  DaMethod da_method = DaMethod::None;
  DomainDef domain_def = DomainDef::None;
  std::optional<DomainKey> reference_domain;  // defaults to the smallest training domain
  int epochs = 40;
  int batch = 32;
  int patience = 8;
  std::uint64_t seed = 0;
  learn::AdamWConfig optimizer;
  std::vector<double> mmd_gammas = {0.01, 0.1, 1.0};
  double temperature = 0.1;
  std::optional<double> fixed_lambda;  // overrides the annealed GRL coefficient

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Easy preset used for the separability checks: small widths, short schedule.
ModelConfig easy_preset();

struct DigitClassifier {
  ModelConfig config;
  int rows = 0;  // window length
  int cols = 0;  // feature width
  learn::ParamStore params;       // trained
  Eigen::VectorXd column_mean;    // input standardization
  Eigen::VectorXd column_scale;
  DomainKey reference_domain;
  std::map<std::tuple<int, int, int>, int> context_ids;  // (prev, digit, next) -> class

  std::vector<std::string> tasks() const;  // "digit" then one per auxiliary objective
  learn::Checkpoint to_checkpoint() const;
  static DigitClassifier from_checkpoint(const learn::Checkpoint& ck);
};

/// Fresh, untrained classifier for windows of the given shape.
DigitClassifier init_classifier(const ModelConfig& config, int rows, int cols,
                                std::span<const Sample> train = {});

struct EpochLog {
  int epoch = 0;
  double digit_loss = 0;
  double domain_loss = 0;  // summed over auxiliary objectives
  double total_loss = 0;
  double lambda = 0;
  double val_accuracy = 0;
  std::vector<double> log_vars;
};

struct TrainResult {
  DigitClassifier model;
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_accuracy = 0;
};

/// Throws EmptySplit or MissingDomainLabels.
TrainResult model_train(std::span<const Sample> train, std::span<const Sample> val, const ModelConfig& config);

/// Digit logits, embeddings and domain-head outputs for a batch, in eval mode.
struct ForwardOutput {
  std::vector<double> logits;     // [B x 10]
  std::vector<double> embedding;  // [B x E]
};
ForwardOutput model_forward(const DigitClassifier& model, std::span<const Sample> batch);

DigitProbs model_predict(const DigitClassifier& model, const Sample& sample);
std::vector<DigitProbs> model_predict(const DigitClassifier& model, std::span<const Sample> samples);

double accuracy(const DigitClassifier& model, std::span<const Sample> samples);

/// Mean binary cross-entropy of the physical-domain discriminator in eval mode.
double physical_discriminator_loss(const DigitClassifier& model, std::span<const Sample> samples);

}  // namespace pinsight::attacks
