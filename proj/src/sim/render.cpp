#include <cmath>
#include <cstdio>
#include <random>

#include "pinsight/channel_sim.hpp"
#include "pinsight/error.hpp"

namespace pinsight::sim {

namespace {

void normalize_last_row(Eigen::MatrixXcd& v) {
  const auto last = v.rows() - 1;
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    const double mag = std::abs(v(last, c));
    if (mag > 0) v.col(c) *= std::conj(v(last, c)) / mag;
  }
}

}  // namespace

Eigen::MatrixXcd feedback_matrix(const Eigen::MatrixXcd& h, int n_stream) {
  if (n_stream < 1 || n_stream > h.cols() || n_stream > h.rows())
    throw Error(ErrorKind::InvalidConfig, "n_stream exceeds channel rank");
  Eigen::MatrixXcd v;
  if (h.rows() == 2) {
    // Two receive antennas: the 2x2 Gram matrix gives U and sigma, V = H^H U / sigma.
    const Eigen::Matrix2cd gram = h * h.adjoint();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(gram);
    const auto& lam = es.eigenvalues();  // ascending
    if (lam(1) > 0 && lam(0) > 1e-8 * lam(1)) {
      v.resize(h.cols(), n_stream);
      for (int k = 0; k < n_stream; ++k) {
        const int idx = 1 - k;
        v.col(k) = h.adjoint() * es.eigenvectors().col(idx) / std::sqrt(lam(idx));
      }
    }
  }
  if (v.size() == 0) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(h, Eigen::ComputeFullV);
    v = svd.matrixV().leftCols(n_stream);
  }
  normalize_last_row(v);
  return v;
}

PinTrace render_trace(const Scene& scene, const TypingPlan& plan, const HandModel& hand,
                      const RenderOptions& options, const DomainKey& domain) {
  scene.validate();
  hand.validate();
  options.codebook.validate();
  const Trajectory traj = plan_trajectory(plan);
  const auto freqs = subcarrier_frequencies(scene.channel_id);

  const std::uint64_t scene_seed = scene.seed();
  std::mt19937_64 rng(mix_seed(mix_seed(scene_seed, plan.rng_seed), options.noise_seed));
  std::normal_distribution<double> normal(0.0, 1.0);

  PinTrace tr;
  tr.domain = domain;
  tr.sample_rate = plan.sample_rate;
  tr.scene_seed = scene_seed;
  tr.plan_seed = plan.rng_seed;
  tr.keystrokes = traj.keystrokes;
  tr.digits.assign(plan.pin.begin(), plan.pin.end());
  char tail[32];
  std::snprintf(tail, sizeof tail, "-%016llx", static_cast<unsigned long long>(plan.rng_seed));
  tr.id = domain.str() + "-";
  for (int d : plan.pin) tr.id += static_cast<char>('0' + d);
  tr.id += tail;

  const int T = static_cast<int>(traj.times.size());
  tr.reports.reserve(T);
  tr.matrices.reserve(T);
  const StaticChannel fixed = static_channel(scene, freqs);
  for (int n = 0; n < T; ++n) {
    std::optional<Vec3> tip;
    if (options.hand_present) tip = traj.positions[n];
    ChannelSample cs = synth_channel(scene, hand, tip, freqs, false, &fixed);

    if (std::isfinite(scene.snr_db)) {
      double power = 0.0;
      for (const auto& x : cs.H) power += std::norm(x);
      power /= static_cast<double>(cs.H.size());
      const double sigma = std::sqrt(power / std::pow(10.0, scene.snr_db / 10.0) / 2.0);
      for (auto& x : cs.H) x += cplx(sigma * normal(rng), sigma * normal(rng));
    }

    codec::BfiMatrix v(cs.n_sub, cs.n_tx, options.n_stream);
    for (int s = 0; s < cs.n_sub; ++s)
      v.set_subcarrier(s, feedback_matrix(cs.matrix(s), options.n_stream));
    tr.reports.push_back(codec::compress(v, options.codebook, traj.times[n]));
    tr.matrices.push_back(codec::decompress(tr.reports.back()));
  }
  if (options.keep_hand_positions) tr.hand_positions = traj.positions;
  tr.validate();
  return tr;
}

std::vector<PinTrace> render_batch(std::span<const RenderJob> jobs, const HandModel& hand,
                                   bool parallel) {
  std::vector<PinTrace> out(jobs.size());
  const auto n = static_cast<long>(jobs.size());
  if (parallel) {
    // Exceptions must not cross the parallel region; rethrow the first one afterwards.
    std::vector<std::exception_ptr> errors(jobs.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) {
      try {
        const auto& j = jobs[i];
        out[i] = render_trace(j.scene, j.plan, hand, j.options, j.domain);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (long i = 0; i < n; ++i) {
      const auto& j = jobs[i];
      out[i] = render_trace(j.scene, j.plan, hand, j.options, j.domain);
    }
  }
  return out;
}

}  // namespace pinsight::sim
