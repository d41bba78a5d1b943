#pragma once

// Tape-based reverse-mode differentiation over row-major double tensors.
// A Graph records one forward pass; backward() walks it once in reverse.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace pinsight::learn {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);

  std::size_t size() const { return values.size(); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
  int rank() const { return static_cast<int>(shape.size()); }
  void zero_grad();
  bool finite() const;
};

std::size_t shape_product(std::span<const int> shape);

using Var = int;

class Graph {
 public:
  /// Constant leaf; its gradient is still tracked and readable.
  Var input(const Tensor& t);
  /// Leaf bound to `p`; backward() adds into p->grad.
  Var param(Tensor* p);

  const Tensor& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v)).value; }
  const std::vector<double>& grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v)).grad; }
  double scalar(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(out)/d(out) = 1 and propagates. `out` must hold one value.
  void backward(Var out);

  // Layers. x: [B, in], w: [in, out], b: [out].
  Var dense(Var x, Var w, Var b);
  // x: [B, L, C], w: [K, C, F], b: [F]; "same" padding, output [B, ceil(L/stride), F].
  Var conv1d(Var x, Var w, Var b, int stride = 1);
  Var relu(Var x);
  /// Multiplies by a fixed mask (entries 0 or 1/(1-p)).
  Var dropout(Var x, std::span<const double> mask);
  Var flatten(Var x);
  Var grl(Var x, double lambda);
  Var rows(Var x, std::span<const int> index);

  // Scalar plumbing.
  Var add(Var a, Var b);
  Var scale(Var a, double c);

  // Losses; all return a single-value tensor.
  Var softmax_cross_entropy(Var logits, std::span<const int> labels);
  Var binary_cross_entropy(Var logits, std::span<const double> targets);
  Var mmd(Var a, Var b, std::span<const double> gammas);
  Var supcon(Var embeddings, std::span<const int> labels, double temperature);
  /// sum_k exp(-s_k) * L_k + s_k with s = log_vars (one entry per loss).
  Var uncertainty(std::span<const Var> losses, Var log_vars);

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::function<void(Graph&)> back;
    Tensor* bound = nullptr;
  };

  Var push(Tensor value, std::function<void(Graph&)> back = {});
  std::vector<double>& g(Var v) { return nodes_[static_cast<std::size_t>(v)].grad; }

  std::vector<Node> nodes_;
};

/// Row-wise softmax of a [B, K] value array.
std::vector<double> softmax_rows(std::span<const double> logits, int cols);

/// Inverted-dropout mask of the given size.
std::vector<double> dropout_mask(std::size_t n, double p, std::mt19937_64& rng);

/// 2 / (1 + exp(-10 p)) - 1.
double grl_schedule(double progress);

using GraphBuilder = std::function<Var(Graph&, std::span<const Var>)>;

/// Analytic gradients of the scalar produced by `build` with respect to each input.
std::vector<std::vector<double>> analytic_gradients(const GraphBuilder& build,
                                                    std::span<const Tensor> inputs);
/// Central-difference gradients with step h.
std::vector<std::vector<double>> numeric_gradients(const GraphBuilder& build,
                                                   std::span<const Tensor> inputs, double h = 1e-4);
/// Largest |a - n| / max(|a|, |n|, 1e-8) over every input entry.
double check_gradients(const GraphBuilder& build, std::span<const Tensor> inputs, double h = 1e-4);

}  // namespace pinsight::learn
