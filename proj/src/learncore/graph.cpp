#include "pinsight/learncore/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "pinsight/error.hpp"

namespace pinsight::learn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
  throw Error(ErrorKind::ShapeMismatch, op + ": " + detail);
}

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

void add_into(std::vector<double>& dst, const std::vector<double>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

double log_sum_exp(const double* x, int n) {
  const double m = *std::max_element(x, x + n);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

}  // namespace

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
  const std::size_t n = shape_product(shape);
  values.assign(n, fill);
  grad.assign(n, 0.0);
}

void Tensor::zero_grad() { grad.assign(values.size(), 0.0); }

bool Tensor::finite() const {
  auto ok = [](double v) { return std::isfinite(v); };
  return std::all_of(values.begin(), values.end(), ok) && std::all_of(grad.begin(), grad.end(), ok);
}

std::size_t shape_product(std::span<const int> shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw Error(ErrorKind::ShapeMismatch, "negative dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Var Graph::push(Tensor value, std::function<void(Graph&)> back) {
  if (shape_product(value.shape) != value.values.size())
    shape_error("push", shape_str(value.shape) + " vs " + std::to_string(value.values.size()));
  for (double v : value.values)
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidConfig, "non-finite value in graph");
  Node n;
  n.grad.assign(value.values.size(), 0.0);
  value.grad.clear();
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size() - 1);
}

Var Graph::input(const Tensor& t) {
  Tensor v;
  v.shape = t.shape;
  v.values = t.values;
  return push(std::move(v));
}

Var Graph::param(Tensor* p) {
  const Var id = input(*p);
  nodes_.back().bound = p;
  return id;
}

double Graph::scalar(Var v) const {
  const auto& t = value(v);
  if (t.values.size() != 1) shape_error("scalar", shape_str(t.shape));
  return t.values[0];
}

void Graph::backward(Var out) {
  if (value(out).values.size() != 1) shape_error("backward", "output is not a scalar");
  for (auto& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
  g(out)[0] = 1.0;
  for (Var i = out; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.back) n.back(*this);
    if (n.bound) {
      if (n.bound->grad.size() != n.grad.size()) n.bound->grad.assign(n.grad.size(), 0.0);
      add_into(n.bound->grad, n.grad);
      for (double v : n.bound->grad)
        if (!std::isfinite(v)) throw Error(ErrorKind::InvalidConfig, "non-finite gradient");
    }
  }
}

Var Graph::dense(Var x, Var w, Var b) {
  const auto& X = value(x);
  const auto& W = value(w);
  const auto& Bv = value(b);
  if (X.rank() != 2 || W.rank() != 2 || Bv.rank() != 1 || X.dim(1) != W.dim(0) ||
      W.dim(1) != Bv.dim(0))
    shape_error("dense", shape_str(X.shape) + " x " + shape_str(W.shape) + " + " + shape_str(Bv.shape));
  const int batch = X.dim(0), in = X.dim(1), out = W.dim(1);
  Tensor y({batch, out});
  MMap Y(y.values.data(), batch, out);
  Y.noalias() = CMap(X.values.data(), batch, in) * CMap(W.values.data(), in, out);
  Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(Bv.values.data(), out);
  const Var self = push(std::move(y));
  nodes_[static_cast<std::size_t>(self)].back = [x, w, b, self, batch, in, out](Graph& gr) {
    CMap G(gr.g(self).data(), batch, out);
    MMap(gr.g(x).data(), batch, in).noalias() += G * CMap(gr.value(w).values.data(), in, out).transpose();
    MMap(gr.g(w).data(), in, out).noalias() += CMap(gr.value(x).values.data(), batch, in).transpose() * G;
    Eigen::Map<Eigen::RowVectorXd>(gr.g(b).data(), out) += G.colwise().sum();
  };
  return self;
}

Var Graph::conv1d(Var x, Var w, Var b, int stride) {
  const auto& X = value(x);
  const auto& W = value(w);
  const auto& Bv = value(b);
  if (stride < 1) shape_error("conv1d", "stride must be positive");
  if (X.rank() != 3 || W.rank() != 3 || Bv.rank() != 1 || X.dim(2) != W.dim(1) ||
      W.dim(2) != Bv.dim(0))
    shape_error("conv1d", shape_str(X.shape) + " * " + shape_str(W.shape) + " + " + shape_str(Bv.shape));
  const int batch = X.dim(0), len = X.dim(1), ch = X.dim(2);
  const int k = W.dim(0), f = W.dim(2);
  const int lout = (len + stride - 1) / stride;
  const int left = std::max((lout - 1) * stride + k - len, 0) / 2;
  const int kc = k * ch;

  // im2col per sample, kept for the backward pass.
  auto cols = std::make_shared<std::vector<RowMat>>(static_cast<std::size_t>(batch));
  Tensor y({batch, lout, f});
  const CMap Wm(W.values.data(), kc, f);
  const Eigen::Map<const Eigen::RowVectorXd> bias(Bv.values.data(), f);
  for (int s = 0; s < batch; ++s) {
    RowMat& col = (*cols)[static_cast<std::size_t>(s)];
    col.setZero(lout, kc);
    const double* xs = X.values.data() + static_cast<std::size_t>(s) * len * ch;
    for (int o = 0; o < lout; ++o)
      for (int t = 0; t < k; ++t) {
        const int pos = o * stride - left + t;
        if (pos < 0 || pos >= len) continue;
        std::copy(xs + static_cast<std::size_t>(pos) * ch, xs + static_cast<std::size_t>(pos + 1) * ch,
                  col.row(o).data() + t * ch);
      }
    MMap Y(y.values.data() + static_cast<std::size_t>(s) * lout * f, lout, f);
    Y.noalias() = col * Wm;
    Y.rowwise() += bias;
  }
  const Var self = push(std::move(y));
  nodes_[static_cast<std::size_t>(self)].back = [=](Graph& gr) {
    const CMap Wm(gr.value(w).values.data(), kc, f);
    MMap dW(gr.g(w).data(), kc, f);
    Eigen::Map<Eigen::RowVectorXd> db(gr.g(b).data(), f);
    auto& dx = gr.g(x);
    for (int s = 0; s < batch; ++s) {
      const RowMat& col = (*cols)[static_cast<std::size_t>(s)];
      const CMap G(gr.g(self).data() + static_cast<std::size_t>(s) * lout * f, lout, f);
      dW.noalias() += col.transpose() * G;
      db += G.colwise().sum();
      const RowMat dcol = G * Wm.transpose();
      double* dxs = dx.data() + static_cast<std::size_t>(s) * len * ch;
      for (int o = 0; o < lout; ++o)
        for (int t = 0; t < k; ++t) {
          const int pos = o * stride - left + t;
          if (pos < 0 || pos >= len) continue;
          const double* src = dcol.row(o).data() + t * ch;
          double* dst = dxs + static_cast<std::size_t>(pos) * ch;
          for (int c = 0; c < ch; ++c) dst[c] += src[c];
        }
    }
  };
  return self;
}

Var Graph::relu(Var x) {
  Tensor y = value(x);
  for (auto& v : y.values) v = v > 0.0 ? v : 0.0;
  const Var self = push(std::move(y));
  nodes_[static_cast<std::size_t>(self)].back = [x, self](Graph& gr) {
    const auto& xv = gr.value(x).values;
    auto& dx = gr.g(x);
    const auto& gy = gr.g(self);
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (xv[i] > 0.0) dx[i] += gy[i];
  };
  return self;
}

Var Graph::dropout(Var x, std::span<const double> mask) {
  Tensor y = value(x);
  if (mask.size() != y.values.size()) shape_error("dropout", "mask size");
  for (std::size_t i = 0; i < mask.size(); ++i) y.values[i] *= mask[i];
  const Var self = push(std::move(y));
  nodes_[static_cast<std::size_t>(self)].back =
      [x, self, m = std::vector<double>(mask.begin(), mask.end())](Graph& gr) {
        auto& dx = gr.g(x);
        const auto& gy = gr.g(self);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += gy[i] * m[i];
      };
  return self;
}

Var Graph::flatten(Var x) {
  Tensor y = value(x);
  if (y.rank() < 1) shape_error("flatten", "rank 0");
  const int batch = y.dim(0);
  y.shape = {batch, batch ? static_cast<int>(y.values.size() / static_cast<std::size_t>(batch)) : 0};
  const Var self = push(std::move(y));
  nodes_[static_cast<std::size_t>(self)].back = [x, self](Graph& gr) { add_into(gr.g(x), gr.g(self)); };
  return self;
}

Var Graph::grl(Var x, double lambda) {
  if (!(lambda >= 0.0)) throw Error(ErrorKind::InvalidConfig, "grl lambda must be >= 0");
  const Var self = push(value(x));
  nodes_[static_cast<std::size_t>(self)].back = [x, self, lambda](Graph& gr) {
    auto& dx = gr.g(x);
    const auto& gy = gr.g(self);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += -lambda * gy[i];
  };
  return self;
}

Var Graph::rows(Var x, std::span<const int> index) {
  const auto& X = value(x);
  if (X.rank() < 1) shape_error("rows", "rank 0");
  const std::size_t stride = X.dim(0) ? X.values.size() / static_cast<std::size_t>(X.dim(0)) : 0;
  Tensor y;
  y.shape = X.shape;
  y.shape[0] = static_cast<int>(index.size());
  for (int r : index) {
    if (r < 0 || r >= X.dim(0)) throw Error(ErrorKind::IndexOutOfRange, "rows: " + std::to_string(r));
    y.values.insert(y.values.end(), X.values.begin() + static_cast<long>(r * stride),
                    X.values.begin() + static_cast<long>((r + 1) * stride));
  }
  const Var self = push(std::move(y));
  nodes_[static_cast<std::size_t>(self)].back =
      [x, self, stride, idx = std::vector<int>(index.begin(), index.end())](Graph& gr) {
        auto& dx = gr.g(x);
        const auto& gy = gr.g(self);
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t j = 0; j < stride; ++j)
            dx[static_cast<std::size_t>(idx[i]) * stride + j] += gy[i * stride + j];
      };
  return self;
}

Var Graph::add(Var a, Var b) {
  Tensor y = value(a);
  const auto& bv = value(b);
  if (bv.shape != y.shape) shape_error("add", shape_str(y.shape) + " vs " + shape_str(bv.shape));
  for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] += bv.values[i];
  const Var self = push(std::move(y));
  nodes_[static_cast<std::size_t>(self)].back = [a, b, self](Graph& gr) {
    add_into(gr.g(a), gr.g(self));
    add_into(gr.g(b), gr.g(self));
  };
  return self;
}

Var Graph::scale(Var a, double c) {
  Tensor y = value(a);
  for (auto& v : y.values) v *= c;
  const Var self = push(std::move(y));
  nodes_[static_cast<std::size_t>(self)].back = [a, self, c](Graph& gr) {
    auto& da = gr.g(a);
    const auto& gy = gr.g(self);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += c * gy[i];
  };
  return self;
}

Var Graph::softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const auto& Z = value(logits);
  if (Z.rank() != 2 || static_cast<std::size_t>(Z.dim(0)) != labels.size() || Z.dim(0) == 0)
    shape_error("softmax_cross_entropy", shape_str(Z.shape) + " vs " + std::to_string(labels.size()) + " labels");
  const int batch = Z.dim(0), k = Z.dim(1);
  double loss = 0.0;
  for (int i = 0; i < batch; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw Error(ErrorKind::IndexOutOfRange, "label " + std::to_string(y));
    const double* row = Z.values.data() + static_cast<std::size_t>(i) * k;
    loss += log_sum_exp(row, k) - row[y];
  }
  Tensor out({1}, loss / batch);
  const Var self = push(std::move(out));
  nodes_[static_cast<std::size_t>(self)].back =
      [logits, self, batch, k, lab = std::vector<int>(labels.begin(), labels.end())](Graph& gr) {
        const double gout = gr.g(self)[0] / batch;
        const auto p = softmax_rows(gr.value(logits).values, k);
        auto& dz = gr.g(logits);
        for (int i = 0; i < batch; ++i)
          for (int j = 0; j < k; ++j) {
            const std::size_t at = static_cast<std::size_t>(i) * k + j;
            dz[at] += gout * (p[at] - (j == lab[static_cast<std::size_t>(i)] ? 1.0 : 0.0));
          }
      };
  return self;
}

Var Graph::binary_cross_entropy(Var logits, std::span<const double> targets) {
  const auto& Z = value(logits);
  if (Z.values.size() != targets.size() || targets.empty())
    shape_error("binary_cross_entropy", shape_str(Z.shape) + " vs " + std::to_string(targets.size()) + " targets");
  const std::size_t n = targets.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = Z.values[i];
    loss += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
  }
  const Var self = push(Tensor({1}, loss / static_cast<double>(n)));
  nodes_[static_cast<std::size_t>(self)].back =
      [logits, self, t = std::vector<double>(targets.begin(), targets.end())](Graph& gr) {
        const double gout = gr.g(self)[0] / static_cast<double>(t.size());
        const auto& z = gr.value(logits).values;
        auto& dz = gr.g(logits);
        for (std::size_t i = 0; i < t.size(); ++i) {
          const double s = z[i] >= 0 ? 1.0 / (1.0 + std::exp(-z[i])) : std::exp(z[i]) / (1.0 + std::exp(z[i]));
          dz[i] += gout * (s - t[i]);
        }
      };
  return self;
}

Var Graph::mmd(Var a, Var b, std::span<const double> gammas) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(1) || A.dim(0) < 1 || B.dim(0) < 1)
    shape_error("mmd", shape_str(A.shape) + " vs " + shape_str(B.shape));
  if (gammas.empty()) throw Error(ErrorKind::InvalidConfig, "mmd needs at least one bandwidth");
  const int na = A.dim(0), nb = B.dim(0), d = A.dim(1);
  const std::vector<double> gam(gammas.begin(), gammas.end());

  // Visits every ordered pair of the three kernel sums with its weight.
  auto visit = [=](const double* av, const double* bv, auto&& fn) {
    const double waa = 1.0 / (double(na) * na), wbb = 1.0 / (double(nb) * nb), wab = -2.0 / (double(na) * nb);
    for (int i = 0; i < na; ++i)
      for (int j = 0; j < na; ++j) fn(av + i * d, av + j * d, waa, 0, i, 0, j);
    for (int i = 0; i < nb; ++i)
      for (int j = 0; j < nb; ++j) fn(bv + i * d, bv + j * d, wbb, 1, i, 1, j);
    for (int i = 0; i < na; ++i)
      for (int j = 0; j < nb; ++j) fn(av + i * d, bv + j * d, wab, 0, i, 1, j);
  };
  auto sqdist = [d](const double* p, const double* q) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += (p[c] - q[c]) * (p[c] - q[c]);
    return s;
  };

  double total = 0.0;
  visit(A.values.data(), B.values.data(), [&](const double* p, const double* q, double w, int, int, int, int) {
    const double r2 = sqdist(p, q);
    for (double gm : gam) total += w * std::exp(-gm * r2);
  });
  const Var self = push(Tensor({1}, std::max(total, 0.0)));
  nodes_[static_cast<std::size_t>(self)].back = [=](Graph& gr) {
    const double gout = gr.g(self)[0];
    double* grads[2] = {gr.g(a).data(), gr.g(b).data()};
    visit(gr.value(a).values.data(), gr.value(b).values.data(),
          [&](const double* p, const double* q, double w, int sp, int ip, int sq, int iq) {
            const double r2 = sqdist(p, q);
            double coef = 0.0;
            for (double gm : gam) coef += -2.0 * gm * std::exp(-gm * r2);
            coef *= w * gout;
            double* gp = grads[sp] + ip * d;
            double* gq = grads[sq] + iq * d;
            for (int c = 0; c < d; ++c) {
              const double diff = coef * (p[c] - q[c]);
              gp[c] += diff;
              gq[c] -= diff;
            }
          });
  };
  return self;
}

Var Graph::supcon(Var embeddings, std::span<const int> labels, double temperature) {
  const auto& E = value(embeddings);
  if (E.rank() != 2 || static_cast<std::size_t>(E.dim(0)) != labels.size())
    shape_error("supcon", shape_str(E.shape) + " vs " + std::to_string(labels.size()) + " labels");
  if (E.dim(0) < 2) throw Error(ErrorKind::DegenerateBatch, "supcon needs at least two samples");
  if (!(temperature > 0.0)) throw Error(ErrorKind::InvalidConfig, "temperature must be positive");
  const int n = E.dim(0), d = E.dim(1);
  const std::vector<int> lab(labels.begin(), labels.end());

  RowMat z = CMap(E.values.data(), n, d);
  Eigen::VectorXd norms(n);
  for (int i = 0; i < n; ++i) {
    norms[i] = std::max(z.row(i).norm(), 1e-12);
    z.row(i) /= norms[i];
  }
  const RowMat s = (z * z.transpose()) / temperature;

  // coef(i, a) = dL/ds_ia, accumulated per anchor.
  RowMat coef = RowMat::Zero(n, n);
  double loss = 0.0;
  int anchors = 0;
  for (int i = 0; i < n; ++i) {
    int npos = 0;
    for (int j = 0; j < n; ++j) npos += (j != i && lab[j] == lab[i]);
    if (npos == 0) continue;
    ++anchors;
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      if (j != i) m = std::max(m, s(i, j));
    double den = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) den += std::exp(s(i, j) - m);
    const double lse = m + std::log(den);
    double li = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const bool pos = lab[j] == lab[i];
      if (pos) li -= (s(i, j) - lse) / npos;
      coef(i, j) = std::exp(s(i, j) - lse) - (pos ? 1.0 / npos : 0.0);
    }
    loss += li;
  }
  if (anchors == 0) throw Error(ErrorKind::DegenerateBatch, "no positive pairs in batch");
  coef /= anchors;

  const Var self = push(Tensor({1}, loss / anchors));
  nodes_[static_cast<std::size_t>(self)].back = [=](Graph& gr) {
    const double gout = gr.g(self)[0];
    // ds_ij/dz_i = z_j / tau and symmetric.
    const RowMat gz = (coef * z + coef.transpose() * z) * (gout / temperature);
    MMap ge(gr.g(embeddings).data(), n, d);
    for (int i = 0; i < n; ++i) {
      const double proj = z.row(i).dot(gz.row(i));
      ge.row(i) += (gz.row(i) - proj * z.row(i)) / norms[i];
    }
  };
  return self;
}

Var Graph::uncertainty(std::span<const Var> losses, Var log_vars) {
  const auto& S = value(log_vars);
  if (S.values.size() != losses.size() || losses.empty())
    shape_error("uncertainty", std::to_string(losses.size()) + " losses vs " + shape_str(S.shape));
  double total = 0.0;
  for (std::size_t k = 0; k < losses.size(); ++k)
    total += std::exp(-S.values[k]) * scalar(losses[k]) + S.values[k];
  const Var self = push(Tensor({1}, total));
  nodes_[static_cast<std::size_t>(self)].back =
      [self, log_vars, ls = std::vector<Var>(losses.begin(), losses.end())](Graph& gr) {
        const double gout = gr.g(self)[0];
        for (std::size_t k = 0; k < ls.size(); ++k) {
          const double s = gr.value(log_vars).values[k];
          const double l = gr.scalar(ls[k]);
          gr.g(ls[k])[0] += gout * std::exp(-s);
          gr.g(log_vars)[k] += gout * (1.0 - std::exp(-s) * l);
        }
      };
  return self;
}

std::vector<double> softmax_rows(std::span<const double> logits, int cols) {
  if (cols <= 0 || logits.size() % static_cast<std::size_t>(cols) != 0)
    throw Error(ErrorKind::ShapeMismatch, "softmax_rows: width");
  std::vector<double> out(logits.size());
  for (std::size_t r = 0; r < logits.size(); r += static_cast<std::size_t>(cols)) {
    const double lse = log_sum_exp(logits.data() + r, cols);
    for (int j = 0; j < cols; ++j) out[r + j] = std::exp(logits[r + j] - lse);
  }
  return out;
}

std::vector<double> dropout_mask(std::size_t n, double p, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw Error(ErrorKind::InvalidConfig, "dropout rate must be in [0,1)");
  std::vector<double> mask(n, 1.0);
  if (p == 0.0) return mask;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep = 1.0 / (1.0 - p);
  for (auto& m : mask) m = u(rng) < p ? 0.0 : keep;
  return mask;
}

double grl_schedule(double progress) {
  if (!(progress >= 0.0 && progress <= 1.0)) throw Error(ErrorKind::InvalidConfig, "progress outside [0,1]");
  return 2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0;
}

std::vector<std::vector<double>> analytic_gradients(const GraphBuilder& build,
                                                    std::span<const Tensor> inputs) {
  Graph gr;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(gr.input(t));
  const Var out = build(gr, leaves);
  gr.backward(out);
  std::vector<std::vector<double>> grads;
  for (Var v : leaves) grads.push_back(gr.grad(v));
  return grads;
}

std::vector<std::vector<double>> numeric_gradients(const GraphBuilder& build,
                                                   std::span<const Tensor> inputs, double h) {
  std::vector<Tensor> work(inputs.begin(), inputs.end());
  auto eval = [&]() {
    Graph gr;
    std::vector<Var> leaves;
    for (const auto& t : work) leaves.push_back(gr.input(t));
    return gr.scalar(build(gr, leaves));
  };
  std::vector<std::vector<double>> grads;
  for (auto& t : work) {
    std::vector<double> gi(t.values.size());
    for (std::size_t j = 0; j < t.values.size(); ++j) {
      const double orig = t.values[j];
      t.values[j] = orig + h;
      const double up = eval();
      t.values[j] = orig - h;
      const double down = eval();
      t.values[j] = orig;
      gi[j] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(gi));
  }
  return grads;
}

double check_gradients(const GraphBuilder& build, std::span<const Tensor> inputs, double h) {
  const auto a = analytic_gradients(build, inputs);
  const auto n = numeric_gradients(build, inputs, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      const double den = std::max({std::abs(a[i][j]), std::abs(n[i][j]), 1e-8});
      worst = std::max(worst, std::abs(a[i][j] - n[i][j]) / den);
    }
  return worst;
}

}  // namespace pinsight::learn
