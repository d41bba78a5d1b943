#include "pinsight/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "pinsight/error.hpp"

namespace pinsight::features {

namespace {

using codec::BfiMatrix;
using codec::cplx;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kPi = std::numbers::pi;

constexpr FeatureClass kClasses[] = {
    {"nAmp", 0, 8, Source::Vtilde},     {"nPhs", 8, 6, Source::Vtilde},
    {"nAng", 14, 10, Source::Vhat},     {"ed0", 24, 8, Source::V},
    {"edR", 32, 8, Source::V},          {"gR", 40, 3, Source::V},
    {"g", 43, 3, Source::Vtilde},       {"dfs", 46, 16, Source::V},
    {"mrc", 62, 8, Source::V},          {"hAmp", 70, 8, Source::V},
    {"hPhs", 78, 6, Source::V},         {"lAmp", 84, 8, Source::V},
    {"lPhs", 92, 6, Source::V},         {"pcaAng", 98, 10, Source::Vhat},
    {"pcaAmp", 108, 8, Source::Vtilde}, {"pcaPhs", 116, 6, Source::Vtilde},
    {"steer", 122, 12, Source::Vtilde},
};

constexpr std::pair<int, int> kSteerPairs[] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};

cplx entry(const BfiMatrix& m, int s, int c) { return m.at(s, c / 2, c % 2); }

// Mean removal that maps a constant series to exact zeros.
void demean(double* x, int n, int stride) {
  bool constant = true;
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    sum += x[i * stride];
    constant &= x[i * stride] == x[0];
  }
  const double mean = sum / n;
  for (int i = 0; i < n; ++i) x[i * stride] = constant ? 0.0 : x[i * stride] - mean;
}

int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n - 2;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

Eigen::MatrixXcd orthonormal_mean(const BfiMatrix& m) {
  Eigen::MatrixXcd mean = Eigen::MatrixXcd::Zero(m.n_tx, m.n_stream);
  for (int s = 0; s < m.n_sub; ++s)
    for (int r = 0; r < m.n_tx; ++r)
      for (int c = 0; c < m.n_stream; ++c) mean(r, c) += m.at(s, r, c);
  mean /= static_cast<double>(m.n_sub);
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(mean);
  return qr.householderQ() * Eigen::MatrixXcd::Identity(m.n_tx, m.n_stream);
}

void grassmann_triplet(std::span<const BfiMatrix> seq, int ref, RowMat& out, int offset) {
  std::vector<Eigen::MatrixXcd> q;
  q.reserve(seq.size());
  for (const auto& m : seq) q.push_back(orthonormal_mean(m));
  for (std::size_t t = 0; t < q.size(); ++t) {
    out(t, offset) = t == 0 ? 0.0 : grassmann_distance(q[t], q[t - 1]);
    out(t, offset + 1) = grassmann_distance(q[t], q[0]);
    out(t, offset + 2) = grassmann_distance(q[t], q[ref]);
  }
}

// Temporal variance, population form.
double variance(const std::vector<double>& x) {
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  double v = 0;
  for (double a : x) v += (a - m) * (a - m);
  return v / x.size();
}

std::vector<int> rank_by(const std::vector<double>& var, int n, bool highest) {
  std::vector<int> idx(var.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return highest ? var[a] > var[b] : var[a] < var[b];
  });
  idx.resize(std::min<std::size_t>(n, idx.size()));
  return idx;
}

// [T x S] per-subcarrier phase of channel c, unwrapped along time.
Eigen::MatrixXd subcarrier_phase(std::span<const BfiMatrix> seq, int c) {
  const int T = static_cast<int>(seq.size()), S = seq[0].n_sub;
  Eigen::MatrixXd out(T, S);
  std::vector<double> series(T);
  for (int s = 0; s < S; ++s) {
    for (int t = 0; t < T; ++t) series[t] = std::arg(entry(seq[t], s, c));
    const auto u = unwrap_phase(series);
    for (int t = 0; t < T; ++t) out(t, s) = u[t];
  }
  return out;
}

Eigen::MatrixXd subcarrier_amp(std::span<const BfiMatrix> seq, int c) {
  const int T = static_cast<int>(seq.size()), S = seq[0].n_sub;
  Eigen::MatrixXd out(T, S);
  for (int t = 0; t < T; ++t)
    for (int s = 0; s < S; ++s) out(t, s) = std::abs(entry(seq[t], s, c));
  return out;
}

void check_shapes(std::span<const codec::AngleReport> vhat, std::span<const BfiMatrix> vtilde,
                  std::span<const BfiMatrix> v, int ref) {
  const std::size_t T = vtilde.size();
  if (T == 0) throw Error(ErrorKind::ShapeMismatch, "empty trace");
  if (vhat.size() != T || v.size() != T)
    throw Error(ErrorKind::ShapeMismatch, "V-hat, V-tilde and V must share a length");
  const int S = vtilde[0].n_sub;
  for (std::size_t t = 0; t < T; ++t) {
    for (const auto* m : {&vtilde[t], &v[t]})
      if (m->n_sub != S || m->n_tx != 4 || m->n_stream != 2 ||
          m->values.size() != static_cast<std::size_t>(S) * 8)
        throw Error(ErrorKind::ShapeMismatch, "matrices must be [n_sub x 4 x 2]");
    if (vhat[t].config.n_sub != S || vhat[t].config.n_angles() != 10 ||
        vhat[t].angles.size() != static_cast<std::size_t>(S) * 10)
      throw Error(ErrorKind::ShapeMismatch, "angle reports must be [n_sub x 10]");
  }
  if (ref < 0 || ref >= static_cast<int>(T))
    throw Error(ErrorKind::IndexOutOfRange, "reference index outside trace");
}

}  // namespace

std::span<const FeatureClass> feature_classes() { return kClasses; }

const FeatureClass& feature_class(std::string_view name) {
  for (const auto& c : kClasses)
    if (c.name == name) return c;
  throw Error(ErrorKind::InvalidConfig, "unknown feature class '" + std::string(name) + "'");
}

std::uint64_t contract_hash() {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](std::string_view s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& c : kClasses) {
    feed(c.name);
    feed(":" + std::to_string(c.offset) + "+" + std::to_string(c.count) + "@" +
         std::to_string(static_cast<int>(c.source)) + ";");
  }
  feed("channels=tx-major;dfs=hann16-hop1-reflect;norm=dc-mean");
  return h;
}

std::array<std::pair<int, int>, kChannels> channel_map() {
  std::array<std::pair<int, int>, kChannels> m;
  for (int c = 0; c < kChannels; ++c) m[c] = {c / 2, c % 2};
  return m;
}

double grassmann_distance(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b,
                          double tolerance) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.cols() > a.rows())
    throw Error(ErrorKind::ShapeMismatch, "Grassmann arguments must both be n x k, k <= n");
  const auto k = a.cols();
  const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(k, k);
  if ((a.adjoint() * a - I).cwiseAbs().maxCoeff() > tolerance ||
      (b.adjoint() * b - I).cwiseAbs().maxCoeff() > tolerance)
    throw Error(ErrorKind::NonOrthonormalInput, "Grassmann arguments need orthonormal columns");
  if (a == b) return 0.0;
  // Fixed argument order keeps the result bitwise symmetric.
  if (std::lexicographical_compare(b.data(), b.data() + b.size(), a.data(), a.data() + a.size(),
                                   [](const cplx& x, const cplx& y) {
                                     return x.real() != y.real() ? x.real() < y.real()
                                                                 : x.imag() < y.imag();
                                   }))
    return grassmann_distance(b, a, tolerance);

  const Eigen::MatrixXcd ab = a.adjoint() * b;
  const Eigen::MatrixXcd resid = b - a * ab;
  const Eigen::VectorXd cosv = Eigen::JacobiSVD<Eigen::MatrixXcd>(ab).singularValues();
  const Eigen::VectorXd sinv = Eigen::JacobiSVD<Eigen::MatrixXcd>(resid).singularValues();
  // cos sorted descending pairs with sin sorted ascending.
  double sum = 0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double c = std::clamp(cosv(i), 0.0, 1.0);
    const double s = std::clamp(sinv(k - 1 - i), 0.0, 1.0);
    const double theta = std::atan2(s, c);
    sum += theta * theta;
  }
  return std::sqrt(sum);
}

std::vector<double> unwrap_phase(std::span<const double> series) {
  std::vector<double> out(series.begin(), series.end());
  for (std::size_t i = 1; i < out.size(); ++i) {
    double d = std::remainder(series[i] - series[i - 1], 2 * kPi);
    if (d <= -kPi) d += 2 * kPi;
    out[i] = out[i - 1] + d;
  }
  return out;
}

Eigen::VectorXd pca_first_component(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd x = m;
  for (Eigen::Index j = 0; j < x.cols(); ++j) demean(x.col(j).data(), x.rows(), 1);
  if (x.rows() < 2 || x.cwiseAbs().maxCoeff() == 0.0) return Eigen::VectorXd::Zero(m.rows());
  // Top eigenvector of the smaller of the two Gram matrices.
  Eigen::VectorXd v;
  if (x.rows() < x.cols()) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(x * x.transpose());
    v = x.transpose() * eig.eigenvectors().col(x.rows() - 1);
    v.normalize();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(x.transpose() * x);
    v = eig.eigenvectors().col(x.cols() - 1);
  }
  Eigen::Index big = 0;
  v.cwiseAbs().maxCoeff(&big);
  if (v(big) < 0) v = -v;
  return x * v;
}

SubcarrierSelection select_subcarriers(std::span<const BfiMatrix> v, int n_select) {
  if (v.empty()) throw Error(ErrorKind::ShapeMismatch, "empty trace");
  const int T = static_cast<int>(v.size()), S = v[0].n_sub;
  SubcarrierSelection sel;
  std::vector<double> series(T);
  for (int c = 0; c < kChannels; ++c) {
    auto& var = sel.amp_variance[c];
    var.resize(S);
    for (int s = 0; s < S; ++s) {
      for (int t = 0; t < T; ++t) series[t] = std::abs(entry(v[t], s, c));
      var[s] = variance(series);
    }
    sel.high_amp[c] = rank_by(var, n_select, true);
    sel.low_amp[c] = rank_by(var, n_select, false);
  }
  for (int c = 0; c < kPhaseChannels; ++c) {
    const Eigen::MatrixXd ph = subcarrier_phase(v, c);
    auto& var = sel.phase_variance[c];
    var.resize(S);
    for (int s = 0; s < S; ++s) {
      for (int t = 0; t < T; ++t) series[t] = ph(t, s);
      var[s] = variance(series);
    }
    sel.high_phase[c] = rank_by(var, n_select, true);
    sel.low_phase[c] = rank_by(var, n_select, false);
  }
  return sel;
}

FeatureSeries extract(std::span<const codec::AngleReport> vhat, std::span<const BfiMatrix> vtilde,
                      std::span<const BfiMatrix> v, int ref, const ExtractOptions& options) {
  check_shapes(vhat, vtilde, v, ref);
  if (options.dfs_window < 4 || options.dfs_window % 4 != 0)
    throw Error(ErrorKind::InvalidConfig, "dfs window must be a positive multiple of 4");
  const int T = static_cast<int>(vtilde.size());
  const int S = vtilde[0].n_sub;
  constexpr int kAngles = 10;

  FeatureSeries fs;
  fs.ref_index = ref;
  fs.frames = RowMat::Zero(T, kFeatureWidth);
  auto& F = fs.frames;
  std::vector<double> series(T);

  // nAmp, nPhs: subcarrier means of V-tilde.
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < kChannels; ++c) {
      double a = 0;
      for (int s = 0; s < S; ++s) a += std::abs(entry(vtilde[t], s, c));
      F(t, 0 + c) = a / S;
    }
  for (int c = 0; c < kPhaseChannels; ++c) {
    for (int t = 0; t < T; ++t) {
      cplx z = 0;
      for (int s = 0; s < S; ++s) z += entry(vtilde[t], s, c);
      series[t] = std::arg(z);
    }
    const auto u = unwrap_phase(series);
    for (int t = 0; t < T; ++t) F(t, 8 + c) = u[t];
  }

  // nAng: raw indices averaged over subcarriers, then DC-normalized.
  for (int a = 0; a < kAngles; ++a) {
    for (int t = 0; t < T; ++t) {
      double sum = 0;
      for (int s = 0; s < S; ++s) sum += vhat[t].at(s, a);
      F(t, 14 + a) = sum / S;
    }
    demean(&F(0, 14 + a), T, kFeatureWidth);
  }

  // ed0, edR, mrc on V.
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < kChannels; ++c) {
      double e0 = 0, er = 0, l2 = 0;
      for (int s = 0; s < S; ++s) {
        const cplx x = entry(v[t], s, c);
        e0 += std::norm(x - entry(v[0], s, c));
        er += std::norm(x - entry(v[ref], s, c));
        l2 += std::norm(x);
      }
      F(t, 24 + c) = std::sqrt(e0);
      F(t, 32 + c) = std::sqrt(er);
      F(t, 62 + c) = std::sqrt(l2);
    }
  for (int c = 0; c < kChannels; ++c) demean(&F(0, 62 + c), T, kFeatureWidth);

  grassmann_triplet(v, ref, F, 40);
  grassmann_triplet(vtilde, ref, F, 43);

  // dfs: Hann-windowed short-time spectrum of the subcarrier mean, +/- bins folded.
  {
    const int N = options.dfs_window;
    const int half = N / 2, quarter = N / 4;
    std::vector<double> w(N);
    for (int j = 0; j < N; ++j) w[j] = 0.5 - 0.5 * std::cos(2 * kPi * j / N);
    std::vector<cplx> twiddle(N);
    for (int j = 0; j < N; ++j) twiddle[j] = std::polar(1.0, -2 * kPi * j / N);
    std::vector<cplx> x(T), frame(N);
    for (int c = 0; c < kChannels; ++c) {
      for (int t = 0; t < T; ++t) {
        cplx z = 0;
        for (int s = 0; s < S; ++s) z += entry(v[t], s, c);
        x[t] = z / static_cast<double>(S);
      }
      for (int t = 0; t < T; ++t) {
        // The frame mean is removed first so window leakage of DC stays out of bin 1.
        cplx mean = 0;
        bool flat = true;
        for (int j = 0; j < N; ++j) {
          frame[j] = x[reflect(t - half + j, T)];
          mean += frame[j];
          flat &= frame[j] == frame[0];
        }
        mean /= static_cast<double>(N);
        for (int j = 0; j < N; ++j) frame[j] = flat ? 0.0 : w[j] * (frame[j] - mean);
        double lower = 0, upper = 0;
        for (int k = 1; k <= half; ++k) {
          cplx pos = 0, neg = 0;
          for (int j = 0; j < N; ++j) {
            pos += frame[j] * twiddle[(j * k) % N];
            neg += frame[j] * twiddle[(j * (N - k)) % N];
          }
          const double mag = k == half ? std::abs(pos) : std::abs(pos) + std::abs(neg);
          (k <= quarter ? lower : upper) += mag;
        }
        F(t, 46 + c) = lower / quarter;
        F(t, 54 + c) = upper / (half - quarter);
      }
    }
  }

  // h*/l*: subcarriers ranked by temporal variance.
  {
    const auto sel = select_subcarriers(v, options.n_select);
    for (int c = 0; c < kChannels; ++c) {
      const Eigen::MatrixXd amp = subcarrier_amp(v, c);
      for (int t = 0; t < T; ++t) {
        double hi = 0, lo = 0;
        for (int s : sel.high_amp[c]) hi += amp(t, s);
        for (int s : sel.low_amp[c]) lo += amp(t, s);
        F(t, 70 + c) = hi / sel.high_amp[c].size();
        F(t, 84 + c) = lo / sel.low_amp[c].size();
      }
    }
    for (int c = 0; c < kPhaseChannels; ++c) {
      const Eigen::MatrixXd ph = subcarrier_phase(v, c);
      for (int t = 0; t < T; ++t) {
        double hi = 0, lo = 0;
        for (int s : sel.high_phase[c]) hi += ph(t, s);
        for (int s : sel.low_phase[c]) lo += ph(t, s);
        F(t, 78 + c) = hi / sel.high_phase[c].size();
        F(t, 92 + c) = lo / sel.low_phase[c].size();
      }
    }
  }

  // pca*: first principal component over subcarriers.
  {
    Eigen::MatrixXd m(T, S);
    for (int a = 0; a < kAngles; ++a) {
      for (int t = 0; t < T; ++t)
        for (int s = 0; s < S; ++s) m(t, s) = vhat[t].at(s, a);
      F.col(98 + a) = pca_first_component(m);
    }
    for (int c = 0; c < kChannels; ++c) F.col(108 + c) = pca_first_component(subcarrier_amp(vtilde, c));
    for (int c = 0; c < kPhaseChannels; ++c)
      F.col(116 + c) = pca_first_component(subcarrier_phase(vtilde, c));
  }

  // steer: inter-TX phase difference per stream from unit phasors.
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < 2; ++k)
      for (int p = 0; p < 6; ++p) {
        const auto [i, j] = kSteerPairs[p];
        cplx z = 0;
        for (int s = 0; s < S; ++s) {
          const cplx prod = vtilde[t].at(s, i, k) * std::conj(vtilde[t].at(s, j, k));
          const double mag = std::abs(prod);
          if (mag > 0) z += prod / mag;
        }
        F(t, 122 + 6 * k + p) = std::arg(z);
      }

  if (!F.allFinite()) throw Error(ErrorKind::InvalidConfig, "non-finite feature value");
  return fs;
}

}  // namespace pinsight::features
