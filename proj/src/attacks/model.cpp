#include "pinsight/attacks/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "pinsight/error.hpp"

namespace pinsight::attacks {

using learn::Graph;
using learn::Tensor;
using learn::Var;
using nlohmann::json;

DaMethod parse_da_method(const std::string& s) {
  if (s == "none") return DaMethod::None;
  if (s == "dann") return DaMethod::Dann;
  if (s == "mmd") return DaMethod::Mmd;
  if (s == "contrastive") return DaMethod::Contrastive;
  throw Error(ErrorKind::InvalidConfig, "unknown da_method '" + s + "'");
}

DomainDef parse_domain_def(const std::string& s) {
  if (s == "none") return DomainDef::None;
  if (s == "physical") return DomainDef::Physical;
  if (s == "context") return DomainDef::Context;
  if (s == "both") return DomainDef::Both;
  throw Error(ErrorKind::InvalidConfig, "unknown domain_def '" + s + "'");
}

std::string to_string(DaMethod m) {
  switch (m) {
    case DaMethod::None: return "none";
    case DaMethod::Dann: return "dann";
    case DaMethod::Mmd: return "mmd";
    case DaMethod::Contrastive: return "contrastive";
  }
  return "none";
}

std::string to_string(DomainDef d) {
  switch (d) {
    case DomainDef::None: return "none";
    case DomainDef::Physical: return "physical";
    case DomainDef::Context: return "context";
    case DomainDef::Both: return "both";
  }
  return "none";
}

void ModelConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorKind::InvalidConfig, m); };
  if (conv.empty()) bad("at least one conv layer is required");
  for (const auto& c : conv)
    if (c.filters < 1 || c.kernel < 1 || c.stride < 1) bad("conv layer sizes must be positive");
  if (embedding < 10) bad("embedding width must be >= 10");
  if (domain_hidden < 1) bad("domain_hidden must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) bad("dropout must be in [0,1)");
  if (epochs < 1 || batch < 1 || patience < 1) bad("epochs, batch and patience must be positive");
  if ((da_method == DaMethod::Dann || da_method == DaMethod::Mmd) && domain_def == DomainDef::None)
    bad(to_string(da_method) + " needs a domain definition");
  if (mmd_gammas.empty()) bad("mmd needs at least one bandwidth");
  if (!(temperature > 0.0)) bad("temperature must be positive");
  if (fixed_lambda && !(*fixed_lambda >= 0.0)) bad("fixed_lambda must be >= 0");
}

json ModelConfig::to_json() const {
  json j;
  j["conv"] = json::array();
  for (const auto& c : conv) j["conv"].push_back({c.filters, c.kernel, c.stride});
  j["embedding"] = embedding;
  j["domain_hidden"] = domain_hidden;
  j["dropout"] = dropout;
  j["da_method"] = to_string(da_method);
  j["domain_def"] = to_string(domain_def);
  j["reference_domain"] = reference_domain ? json(reference_domain->str()) : json(nullptr);
  j["epochs"] = epochs;
  j["batch"] = batch;
  j["patience"] = patience;
  j["seed"] = seed;
  j["lr"] = optimizer.lr;
  j["beta1"] = optimizer.beta1;
  j["beta2"] = optimizer.beta2;
  j["eps"] = optimizer.eps;
  j["weight_decay"] = optimizer.weight_decay;
  j["mmd_gammas"] = mmd_gammas;
  j["temperature"] = temperature;
  j["fixed_lambda"] = fixed_lambda ? json(*fixed_lambda) : json(nullptr);
  return j;
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  try {
    if (j.contains("conv")) {
      c.conv.clear();
      for (const auto& l : j.at("conv")) c.conv.push_back({l.at(0).get<int>(), l.at(1).get<int>(), l.at(2).get<int>()});
    }
    c.embedding = j.value("embedding", c.embedding);
    c.domain_hidden = j.value("domain_hidden", c.domain_hidden);
    c.dropout = j.value("dropout", c.dropout);
    c.da_method = parse_da_method(j.value("da_method", to_string(c.da_method)));
    c.domain_def = parse_domain_def(j.value("domain_def", to_string(c.domain_def)));
    if (j.contains("reference_domain") && !j["reference_domain"].is_null())
      c.reference_domain = DomainKey::parse(j["reference_domain"].get<std::string>());
    c.epochs = j.value("epochs", c.epochs);
    c.batch = j.value("batch", c.batch);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    c.optimizer.lr = j.value("lr", c.optimizer.lr);
    c.optimizer.beta1 = j.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = j.value("beta2", c.optimizer.beta2);
    c.optimizer.eps = j.value("eps", c.optimizer.eps);
    c.optimizer.weight_decay = j.value("weight_decay", c.optimizer.weight_decay);
    c.mmd_gammas = j.value("mmd_gammas", c.mmd_gammas);
    c.temperature = j.value("temperature", c.temperature);
    if (j.contains("fixed_lambda") && !j["fixed_lambda"].is_null()) c.fixed_lambda = j["fixed_lambda"].get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig easy_preset() {
  ModelConfig c;
  c.conv = {{16, 5, 1}, {32, 5, 2}};
  c.embedding = 32;
  c.domain_hidden = 16;
  c.dropout = 0.1;
  c.epochs = 80;
  c.batch = 16;
  c.patience = 20;
  c.optimizer.lr = 1e-3;
  return c;
}

namespace {

bool uses_physical(const ModelConfig& c) {
  return (c.da_method == DaMethod::Dann || c.da_method == DaMethod::Mmd) &&
         (c.domain_def == DomainDef::Physical || c.domain_def == DomainDef::Both);
}

bool uses_context(const ModelConfig& c) {
  return (c.da_method == DaMethod::Dann || c.da_method == DaMethod::Mmd) &&
         (c.domain_def == DomainDef::Context || c.domain_def == DomainDef::Both);
}

std::tuple<int, int, int> triplet(const Sample& s) { return {s.prev_digit, s.digit, s.next_digit}; }

int flattened_length(const ModelConfig& c, int rows) {
  int len = rows;
  for (const auto& l : c.conv) len = (len + l.stride - 1) / l.stride;
  return len * c.conv.back().filters;
}

int head_width(const DigitClassifier& m, const std::string& task) {
  return task == "physical" ? 1 : std::max<int>(1, static_cast<int>(m.context_ids.size()));
}

void add_dense(learn::ParamStore& ps, const std::string& name, int in, int out, std::mt19937_64& rng) {
  learn::glorot_uniform(ps.add(name + ".w", {in, out}), in, out, rng);
  ps.add(name + ".b", {out});
}

struct Forward {
  Var embedding = -1;
  Var logits = -1;
  std::map<std::string, Var> domain;  // raw discriminator outputs per task
};

// Binds parameters for training or copies them as constants for inference.
class Binder {
 public:
  Binder(Graph& g, const learn::ParamStore& ps, bool trainable) : g_(g), ps_(ps), trainable_(trainable) {}
  Var operator()(const std::string& name) {
    const Tensor& t = ps_.get(name);
    return trainable_ ? g_.param(const_cast<Tensor*>(&t)) : g_.input(t);
  }

 private:
  Graph& g_;
  const learn::ParamStore& ps_;
  bool trainable_;
};

Tensor batch_tensor(const DigitClassifier& m, std::span<const Sample> samples, std::span<const int> index) {
  Tensor x({static_cast<int>(index.size()), m.rows, m.cols});
  double* out = x.values.data();
  for (int i : index) {
    const auto& w = samples[i].window;
    if (w.rows() != m.rows || w.cols() != m.cols)
      throw Error(ErrorKind::ShapeMismatch, "window " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                                                " vs model " + std::to_string(m.rows) + "x" + std::to_string(m.cols));
    for (int r = 0; r < m.rows; ++r)
      for (int c = 0; c < m.cols; ++c) *out++ = (w(r, c) - m.column_mean[c]) / m.column_scale[c];
  }
  return x;
}

Forward forward(Graph& g, const DigitClassifier& m, const Tensor& x, bool train, std::span<const double> mask,
                double lambda) {
  Binder P(g, m.params, train);
  Var h = g.input(x);
  for (std::size_t i = 0; i < m.config.conv.size(); ++i) {
    const std::string n = "conv" + std::to_string(i);
    h = g.relu(g.conv1d(h, P(n + ".w"), P(n + ".b"), m.config.conv[i].stride));
  }
  Forward f;
  f.embedding = g.relu(g.dense(g.flatten(h), P("embed.w"), P("embed.b")));
  const Var e = mask.empty() ? f.embedding : g.dropout(f.embedding, mask);
  f.logits = g.dense(e, P("digit.w"), P("digit.b"));
  if (m.config.da_method == DaMethod::Dann)
    for (const auto& task : m.tasks()) {
      if (task != "physical" && task != "context") continue;
      const std::string n = "dom_" + task;
      const Var r = g.grl(f.embedding, lambda);
      const Var hid = g.relu(g.dense(r, P(n + "1.w"), P(n + "1.b")));
      f.domain[task] = g.dense(hid, P(n + "2.w"), P(n + "2.b"));
    }
  return f;
}

int argmax(const double* row, int n) { return static_cast<int>(std::max_element(row, row + n) - row); }

}  // namespace

std::vector<std::string> DigitClassifier::tasks() const {
  std::vector<std::string> t = {"digit"};
  if (uses_physical(config)) t.push_back("physical");
  if (uses_context(config)) t.push_back("context");
  if (config.da_method == DaMethod::Contrastive) t.push_back("contrastive");
  return t;
}

DigitClassifier init_classifier(const ModelConfig& config, int rows, int cols, std::span<const Sample> train) {
  config.validate();
  if (rows < 1 || cols < 1) throw Error(ErrorKind::ShapeMismatch, "empty input window");
  DigitClassifier m;
  m.config = config;
  m.rows = rows;
  m.cols = cols;

  m.column_mean = Eigen::VectorXd::Zero(cols);
  m.column_scale = Eigen::VectorXd::Ones(cols);
  if (!train.empty()) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(cols), sq = Eigen::VectorXd::Zero(cols);
    double n = 0;
    for (const auto& s : train) {
      if (s.window.rows() != rows || s.window.cols() != cols) throw Error(ErrorKind::ShapeMismatch, "training window");
      sum += s.window.colwise().sum().transpose();
      sq += s.window.array().square().colwise().sum().matrix().transpose();
      n += rows;
    }
    m.column_mean = sum / n;
    for (int c = 0; c < cols; ++c) {
      const double var = std::max(sq[c] / n - m.column_mean[c] * m.column_mean[c], 0.0);
      m.column_scale[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    std::optional<DomainKey> smallest;
    for (const auto& s : train)
      if (s.domain && (!smallest || *s.domain < *smallest)) smallest = s.domain;
    if (smallest) m.reference_domain = *smallest;
    std::set<std::tuple<int, int, int>> seen;
    for (const auto& s : train) seen.insert(triplet(s));
    int id = 0;
    for (const auto& t : seen) m.context_ids[t] = id++;
  }
  if (config.reference_domain) m.reference_domain = *config.reference_domain;

  std::mt19937_64 init(mix_seed(config.seed, 1));
  int ch = cols;
  for (std::size_t i = 0; i < config.conv.size(); ++i) {
    const auto& l = config.conv[i];
    const std::string n = "conv" + std::to_string(i);
    learn::glorot_uniform(m.params.add(n + ".w", {l.kernel, ch, l.filters}), l.kernel * ch, l.kernel * l.filters,
                          init);
    m.params.add(n + ".b", {l.filters});
    ch = l.filters;
  }
  add_dense(m.params, "embed", flattened_length(config, rows), config.embedding, init);
  add_dense(m.params, "digit", config.embedding, 10, init);

  // Auxiliary heads draw from their own stream so the shared weights match a
  // run without them.
  std::mt19937_64 aux(mix_seed(config.seed, 4));
  const auto tasks = m.tasks();
  if (config.da_method == DaMethod::Dann)
    for (const auto& t : tasks) {
      if (t == "digit") continue;
      add_dense(m.params, "dom_" + t + "1", config.embedding, config.domain_hidden, aux);
      add_dense(m.params, "dom_" + t + "2", config.domain_hidden, head_width(m, t), aux);
    }
  m.params.add("log_vars", {static_cast<int>(tasks.size())});
  return m;
}

ForwardOutput model_forward(const DigitClassifier& model, std::span<const Sample> batch) {
  ForwardOutput out;
  constexpr int kChunk = 64;
  const int n = static_cast<int>(batch.size());
  for (int start = 0; start < n; start += kChunk) {
    std::vector<int> idx(static_cast<std::size_t>(std::min(kChunk, n - start)));
    std::iota(idx.begin(), idx.end(), start);
    Graph g;
    const Forward f = forward(g, model, batch_tensor(model, batch, idx), false, {}, 0.0);
    const auto& lg = g.value(f.logits).values;
    const auto& em = g.value(f.embedding).values;
    out.logits.insert(out.logits.end(), lg.begin(), lg.end());
    out.embedding.insert(out.embedding.end(), em.begin(), em.end());
  }
  return out;
}

std::vector<DigitProbs> model_predict(const DigitClassifier& model, std::span<const Sample> samples) {
  const auto f = model_forward(model, samples);
  const auto p = learn::softmax_rows(f.logits, 10);
  std::vector<DigitProbs> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) std::copy_n(p.begin() + static_cast<long>(i * 10), 10, out[i].begin());
  return out;
}

DigitProbs model_predict(const DigitClassifier& model, const Sample& sample) {
  return model_predict(model, std::span<const Sample>(&sample, 1)).front();
}

double accuracy(const DigitClassifier& model, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  const auto f = model_forward(model, samples);
  int hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) hits += argmax(f.logits.data() + i * 10, 10) == samples[i].digit;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double physical_discriminator_loss(const DigitClassifier& model, std::span<const Sample> samples) {
  if (model.config.da_method != DaMethod::Dann || !uses_physical(model.config))
    throw Error(ErrorKind::InvalidConfig, "model has no physical discriminator");
  std::vector<int> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> target;
  for (const auto& s : samples) {
    if (!s.domain) throw Error(ErrorKind::MissingDomainLabels, "sample " + s.trace_id);
    target.push_back(*s.domain == model.reference_domain ? 1.0 : 0.0);
  }
  Graph g;
  const Forward f = forward(g, model, batch_tensor(model, samples, idx), false, {}, 0.0);
  return g.scalar(g.binary_cross_entropy(f.domain.at("physical"), target));
}

TrainResult model_train(std::span<const Sample> train, std::span<const Sample> val, const ModelConfig& config) {
  config.validate();
  if (train.empty()) throw Error(ErrorKind::EmptySplit, "training split is empty");
  if (val.empty()) throw Error(ErrorKind::EmptySplit, "validation split is empty");
  if (uses_physical(config))
    for (const auto& s : train)
      if (!s.domain) throw Error(ErrorKind::MissingDomainLabels, "sample " + s.trace_id + " has no domain");

  TrainResult result;
  DigitClassifier& m = result.model;
  m = init_classifier(config, static_cast<int>(train.front().window.rows()),
                      static_cast<int>(train.front().window.cols()), train);
  const auto tasks = m.tasks();

  learn::AdamW opt(config.optimizer);
  std::mt19937_64 drop_rng(mix_seed(config.seed, 2));
  std::mt19937_64 shuffle_rng(mix_seed(config.seed, 3));
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  const int n = static_cast<int>(train.size());
  const int per_epoch = (n + config.batch - 1) / config.batch;
  const double total_steps = static_cast<double>(per_epoch) * config.epochs;
  learn::ParamStore best = m.params;
  result.best_val_accuracy = -1.0;
  int since_best = 0;
  long step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i) {
      std::uniform_int_distribution<int> pick(0, i);
      std::swap(order[i], order[pick(shuffle_rng)]);
    }
    EpochLog log;
    log.epoch = epoch;
    for (int start = 0; start < n; start += config.batch) {
      const std::span<const int> idx(order.data() + start, static_cast<std::size_t>(std::min(config.batch, n - start)));
      const int bsz = static_cast<int>(idx.size());
      const double lambda =
          config.fixed_lambda ? *config.fixed_lambda : learn::grl_schedule(static_cast<double>(step) / total_steps);
      const auto mask = learn::dropout_mask(static_cast<std::size_t>(bsz * config.embedding), config.dropout, drop_rng);

      Graph g;
      const Forward f = forward(g, m, batch_tensor(m, train, idx), true, mask, lambda);
      std::vector<int> digits;
      for (int i : idx) digits.push_back(train[i].digit);

      std::vector<Var> losses = {g.softmax_cross_entropy(f.logits, digits)};
      std::vector<int> active = {0};
      double aux_sum = 0.0;
      for (std::size_t t = 1; t < tasks.size(); ++t) {
        const std::string& task = tasks[t];
        std::optional<Var> loss;
        // Group id of each batch member for this task.
        std::vector<int> group;
        for (int i : idx) {
          const auto& s = train[i];
          group.push_back(task == "physical" ? (*s.domain == m.reference_domain ? 1 : 0) : m.context_ids.at(triplet(s)));
        }
        if (config.da_method == DaMethod::Dann) {
          if (task == "physical") {
            const std::vector<double> y(group.begin(), group.end());
            loss = g.binary_cross_entropy(f.domain.at(task), y);
          } else {
            loss = g.softmax_cross_entropy(f.domain.at(task), group);
          }
        } else if (config.da_method == DaMethod::Mmd) {
          std::map<int, std::vector<int>> members;
          for (int i = 0; i < bsz; ++i) members[group[i]].push_back(i);
          std::vector<Var> parts;
          for (const auto& [id, in] : members) {
            if (static_cast<int>(in.size()) == bsz) continue;
            std::vector<int> out;
            for (int i = 0; i < bsz; ++i)
              if (group[i] != id) out.push_back(i);
            parts.push_back(g.mmd(g.rows(f.embedding, in), g.rows(f.embedding, out), config.mmd_gammas));
            if (task == "physical") break;  // both groups give the same statistic
          }
          if (!parts.empty()) {
            Var acc = parts[0];
            for (std::size_t p = 1; p < parts.size(); ++p) acc = g.add(acc, parts[p]);
            loss = g.scale(acc, 1.0 / static_cast<double>(parts.size()));
          }
        } else if (config.da_method == DaMethod::Contrastive) {
          std::set<int> labels_seen;
          bool has_pair = false;
          for (int d : digits) has_pair |= !labels_seen.insert(d).second;
          if (has_pair) loss = g.supcon(f.embedding, digits, config.temperature);
        }
        if (loss) {
          losses.push_back(*loss);
          active.push_back(static_cast<int>(t));
          aux_sum += g.scalar(*loss);
        }
      }

      const Var log_vars = g.rows(g.param(&m.params.get("log_vars")), active);
      const Var total = g.uncertainty(losses, log_vars);
      m.params.zero_grad();
      g.backward(total);
      opt.step(m.params);

      log.digit_loss += g.scalar(losses[0]) / per_epoch;
      log.domain_loss += aux_sum / per_epoch;
      log.total_loss += g.scalar(total) / per_epoch;
      log.lambda = lambda;
      ++step;
    }
    log.val_accuracy = accuracy(m, val);
    log.log_vars = m.params.get("log_vars").values;
    result.log.push_back(log);

    if (log.val_accuracy > result.best_val_accuracy) {
      result.best_val_accuracy = log.val_accuracy;
      result.best_epoch = epoch;
      best = m.params;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  m.params = best;
  return result;
}

learn::Checkpoint DigitClassifier::to_checkpoint() const {
  learn::Checkpoint ck;
  ck.params = params;
  auto& mean = ck.params.add("stats.mean", {cols});
  auto& scale = ck.params.add("stats.scale", {cols});
  for (int c = 0; c < cols; ++c) {
    mean.values[c] = column_mean[c];
    scale.values[c] = column_scale[c];
  }
  ck.scalars["rows"] = rows;
  ck.scalars["cols"] = cols;
  json j;
  j["model"] = config.to_json();
  j["reference_domain"] = reference_domain.str();
  j["context_ids"] = json::array();
  for (const auto& [t, id] : context_ids) j["context_ids"].push_back({std::get<0>(t), std::get<1>(t), std::get<2>(t), id});
  ck.config_json = j.dump();
  return ck;
}

DigitClassifier DigitClassifier::from_checkpoint(const learn::Checkpoint& ck) {
  DigitClassifier m;
  json j;
  try {
    j = json::parse(ck.config_json);
    m.config = ModelConfig::from_json(j.at("model"));
    m.reference_domain = DomainKey::parse(j.at("reference_domain").get<std::string>());
    for (const auto& e : j.at("context_ids"))
      m.context_ids[{e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<int>()}] = e.at(3).get<int>();
    m.rows = static_cast<int>(ck.scalars.at("rows"));
    m.cols = static_cast<int>(ck.scalars.at("cols"));
  } catch (const std::exception& e) {
    throw Error(ErrorKind::CorruptHeader, std::string("checkpoint metadata: ") + e.what());
  }
  for (const auto& [name, t] : ck.params.items()) {
    if (name == "stats.mean") {
      m.column_mean = Eigen::Map<const Eigen::VectorXd>(t.values.data(), static_cast<long>(t.size()));
    } else if (name == "stats.scale") {
      m.column_scale = Eigen::Map<const Eigen::VectorXd>(t.values.data(), static_cast<long>(t.size()));
    } else {
      m.params.add(name, t.shape).values = t.values;
    }
  }
  if (m.column_mean.size() != m.cols || m.column_scale.size() != m.cols)
    throw Error(ErrorKind::CorruptHeader, "checkpoint input statistics");
  return m;
}

}  // namespace pinsight::attacks
