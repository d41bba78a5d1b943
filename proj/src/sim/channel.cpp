#include <bit>
#include <cmath>
#include <numbers>
#include <random>

#include "pinsight/channel_sim.hpp"
#include "pinsight/error.hpp"

namespace pinsight::sim {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kFoilGain = 0.9;
const Vec3 kFoilPosition(-0.30, 0.75, 0.10);

bool finite(const Vec3& v) { return v.allFinite(); }

// 80 MHz block centre for a 20 MHz primary channel.
int vht80_center(int channel) {
  static constexpr int kBlocks[][2] = {{36, 42}, {52, 58}, {100, 106}, {116, 122}, {132, 138},
                                       {149, 155}};
  for (const auto& b : kBlocks)
    if (channel >= b[0] && channel <= b[0] + 12 && (channel - b[0]) % 4 == 0) return b[1];
  throw Error(ErrorKind::InvalidConfig, "channel " + std::to_string(channel) +
                                            " is not a 5 GHz VHT80 channel");
}

std::uint64_t bits(double x) { return std::bit_cast<std::uint64_t>(x); }

}  // namespace

void Scene::validate() const {
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
    throw Error(ErrorKind::InvalidConfig, "snr_db must be a real number or +inf");
  if (n_env_paths < 0) throw Error(ErrorKind::InvalidConfig, "n_env_paths must be >= 0");
  if (!(router_phone_distance > 0) || !std::isfinite(router_phone_distance))
    throw Error(ErrorKind::InvalidConfig, "router_phone_distance must be positive");
  if (n_router_antennas < 1) throw Error(ErrorKind::InvalidConfig, "router needs an antenna");
  if (!std::isfinite(router_position_m) || !std::isfinite(reflector_angle_deg) ||
      !std::isfinite(router_rotation_deg) || !std::isfinite(router_height) ||
      !std::isfinite(router_spacing))
    throw Error(ErrorKind::InvalidConfig, "scene geometry must be finite");
  if (router_center_override && !finite(*router_center_override))
    throw Error(ErrorKind::InvalidConfig, "router override must be finite");
  for (const auto& a : phone_antennas)
    if (!finite(a)) throw Error(ErrorKind::InvalidConfig, "phone antennas must be finite");
  vht80_center(channel_id);
}

double Scene::center_frequency_hz() const { return (5000.0 + 5.0 * vht80_center(channel_id)) * 1e6; }

Vec3 Scene::router_center() const {
  if (router_center_override) return *router_center_override;
  return {router_position_m - 0.5, router_phone_distance, router_height};
}

std::vector<Vec3> Scene::router_antennas() const {
  const double rot = router_rotation_deg * kPi / 180.0;
  const Vec3 axis(std::cos(rot), std::sin(rot), 0.0);
  const Vec3 c = router_center();
  std::vector<Vec3> out;
  for (int i = 0; i < n_router_antennas; ++i)
    out.push_back(c + (i - 0.5 * (n_router_antennas - 1)) * router_spacing * axis);
  return out;
}

Scene Scene::from_domain(const DomainKey& key, std::uint64_t base_seed) {
  key.validate();
  Scene s;
  s.room_seed = mix_seed(base_seed, static_cast<std::uint64_t>(key.room));
  s.reflector_angle_deg = key.reflector;
  s.router_position_m = 0.25 * key.position;
  s.channel_id = key.channel;
  return s;
}

std::uint64_t Scene::seed() const {
  std::uint64_t h = mix_seed(room_seed);
  auto add = [&](std::uint64_t v) { h = mix_seed(h, v); };
  add(bits(reflector_angle_deg));
  add(bits(router_position_m));
  add(static_cast<std::uint64_t>(channel_id));
  add(bits(router_phone_distance));
  add(bits(snr_db));
  add(static_cast<std::uint64_t>(n_env_paths));
  add(foil_reflector ? 1 : 0);
  if (router_center_override)
    for (int i = 0; i < 3; ++i) add(bits((*router_center_override)[i]));
  add(bits(router_rotation_deg));
  add(bits(router_height));
  add(bits(router_spacing));
  add(static_cast<std::uint64_t>(n_router_antennas));
  for (const auto& a : phone_antennas)
    for (int i = 0; i < 3; ++i) add(bits(a[i]));
  return h;
}

cplx foil_gain(const Scene& scene) {
  const double a = scene.reflector_angle_deg * kPi / 180.0;
  const Vec3 normal(std::cos(a), std::sin(a), 0.0);
  const Vec3 to_phone = (Vec3::Zero() - kFoilPosition).normalized();
  const Vec3 to_router = (scene.router_center() - kFoilPosition).normalized();
  const double c = std::max(0.0, normal.dot((to_phone + to_router).normalized()));
  return kFoilGain * c * c;
}

std::vector<Reflector> environment(const Scene& scene) {
  std::mt19937_64 rng(mix_seed(scene.room_seed, 0xe4e));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x0 = -1.0 - 2.0 * u(rng), x1 = 1.0 + 2.0 * u(rng);
  const double y0 = -1.0 - 1.5 * u(rng), y1 = 2.5 + 3.0 * u(rng);
  const double z0 = -0.75, z1 = 1.6 + 0.6 * u(rng);

  std::vector<Reflector> out;
  for (int i = 0; i < scene.n_env_paths; ++i) {
    const int wall = static_cast<int>(u(rng) * 6.0) % 6;
    Vec3 p(x0 + (x1 - x0) * u(rng), y0 + (y1 - y0) * u(rng), z0 + (z1 - z0) * u(rng));
    switch (wall) {
      case 0: p.x() = x0; break;
      case 1: p.x() = x1; break;
      case 2: p.y() = y0; break;
      case 3: p.y() = y1; break;
      case 4: p.z() = z0; break;
      default: p.z() = z1; break;
    }
    const double mag = 0.2 + 0.5 * u(rng);
    out.push_back({p, std::polar(mag, 2.0 * kPi * u(rng))});
  }
  if (scene.foil_reflector) out.push_back({kFoilPosition, foil_gain(scene)});
  return out;
}

void HandModel::validate() const {
  if (scatterer_offsets.empty()) throw Error(ErrorKind::InvalidConfig, "hand needs a scatterer");
  if (scatterer_offsets.size() != reflectivities.size())
    throw Error(ErrorKind::ShapeMismatch, "one reflectivity per scatterer");
  for (const auto& r : reflectivities)
    if (!(std::abs(r) <= 1.0)) throw Error(ErrorKind::InvalidConfig, "|reflectivity| must be <= 1");
  for (const auto& o : scatterer_offsets)
    if (!finite(o)) throw Error(ErrorKind::InvalidConfig, "scatterer offsets must be finite");
}

HandModel HandModel::scaled(double factor) const {
  HandModel h = *this;
  for (auto& o : h.scatterer_offsets) o *= factor;
  return h;
}

HandModel HandModel::default_hand() {
  // Knuckle and palm sit behind and above the fingertip, 25 mm and 70 mm away.
  return {{Vec3(0, 0, 0), Vec3(0, -0.015, 0.020), Vec3(0, -0.042, 0.056)}, {0.8, 0.5, 0.9}};
}

Eigen::MatrixXcd ChannelSample::matrix(int s) const {
  Eigen::MatrixXcd m(n_rx, n_tx);
  for (int t = 0; t < n_tx; ++t)
    for (int r = 0; r < n_rx; ++r) m(r, t) = at(s, t, r);
  return m;
}

std::vector<double> subcarrier_frequencies(int channel_id, int n_sub) {
  if (n_sub < 1) throw Error(ErrorKind::InvalidConfig, "n_sub must be positive");
  const double fc = (5000.0 + 5.0 * vht80_center(channel_id)) * 1e6;
  std::vector<double> out;
  out.reserve(n_sub);
  if (n_sub == 234) {
    for (int k = -122; k <= 122; ++k) {
      const int a = std::abs(k);
      if (a < 2 || a == 11 || a == 39 || a == 75 || a == 103) continue;
      out.push_back(fc + k * kSubcarrierSpacing);
    }
  } else if (n_sub == 1) {
    out.push_back(fc);
  } else {
    for (int i = 0; i < n_sub; ++i)
      out.push_back(fc + (-122.0 + 244.0 * i / (n_sub - 1)) * kSubcarrierSpacing);
  }
  return out;
}

cplx path_gain(std::span<const Vec3> points, double freq, cplx scatter) {
  cplx g = scatter;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double d = (points[i] - points[i - 1]).norm();
    if (!(d >= kMinPathLength)) throw Error(ErrorKind::DegenerateGeometry, "path segment < 1 mm");
    g *= std::polar(1.0 / d, -2.0 * kPi * freq * d / kSpeedOfLight);
  }
  return g;
}

namespace {

// Amplitude and total length of one propagation path; its per-subcarrier
// response is amp * exp(-j 2 pi f len / c).
struct PathTerm {
  cplx amp;
  double len;
};

double segment(const Vec3& a, const Vec3& b) {
  const double d = (a - b).norm();
  if (!(d >= kMinPathLength)) throw Error(ErrorKind::DegenerateGeometry, "path segment < 1 mm");
  return d;
}

void accumulate(std::vector<cplx>& out, const ChannelSample& cs, int t, int r,
                const std::vector<PathTerm>& terms, std::span<const double> freqs) {
  for (int s = 0; s < cs.n_sub; ++s) {
    cplx acc = 0.0;
    const double k = -2.0 * kPi * freqs[s] / kSpeedOfLight;
    for (const auto& p : terms) acc += p.amp * std::polar(1.0, k * p.len);
    out[cs.index(s, t, r)] = acc;
  }
}

}  // namespace

StaticChannel static_channel(const Scene& scene, std::span<const double> freqs) {
  const auto routers = scene.router_antennas();
  const auto reflectors = environment(scene);
  ChannelSample shape;
  shape.n_sub = static_cast<int>(freqs.size());
  shape.n_tx = static_cast<int>(routers.size());
  shape.n_rx = static_cast<int>(scene.phone_antennas.size());
  const std::size_t total = static_cast<std::size_t>(shape.n_sub) * shape.n_tx * shape.n_rx;
  StaticChannel out{std::vector<cplx>(total), std::vector<cplx>(total)};

  std::vector<PathTerm> direct, env;
  for (int t = 0; t < shape.n_tx; ++t) {
    for (int r = 0; r < shape.n_rx; ++r) {
      const Vec3& a = routers[t];
      const Vec3& b = scene.phone_antennas[r];
      direct.assign(1, {1.0 / segment(a, b), (a - b).norm()});
      env.clear();
      for (const auto& refl : reflectors) {
        const double d1 = segment(a, refl.position), d2 = segment(refl.position, b);
        env.push_back({refl.gain / (d1 * d2), d1 + d2});
      }
      accumulate(out.direct, shape, t, r, direct, freqs);
      accumulate(out.environment, shape, t, r, env, freqs);
    }
  }
  return out;
}

ChannelSample synth_channel(const Scene& scene, const HandModel& hand,
                            const std::optional<Vec3>& fingertip, std::span<const double> freqs,
                            bool keep_components, const StaticChannel* cached) {
  if (fingertip && !finite(*fingertip))
    throw Error(ErrorKind::InvalidConfig, "fingertip position must be finite");
  const auto routers = scene.router_antennas();

  ChannelSample cs;
  cs.n_sub = static_cast<int>(freqs.size());
  cs.n_tx = static_cast<int>(routers.size());
  cs.n_rx = static_cast<int>(scene.phone_antennas.size());
  const std::size_t total = static_cast<std::size_t>(cs.n_sub) * cs.n_tx * cs.n_rx;
  StaticChannel fresh;
  if (!cached) {
    fresh = static_channel(scene, freqs);
    cached = &fresh;
  }
  if (cached->direct.size() != total || cached->environment.size() != total)
    throw Error(ErrorKind::ShapeMismatch, "cached static channel does not match the scene");
  std::vector<cplx> hh(total);

  std::vector<PathTerm> handp;
  if (fingertip) {
    for (int t = 0; t < cs.n_tx; ++t) {
      for (int r = 0; r < cs.n_rx; ++r) {
        const Vec3& a = routers[t];
        const Vec3& b = scene.phone_antennas[r];
        handp.clear();
        for (std::size_t i = 0; i < hand.scatterer_offsets.size(); ++i) {
          const Vec3 h = *fingertip + hand.scatterer_offsets[i];
          const double d1 = segment(b, h), d2 = segment(h, a);
          handp.push_back({hand.reflectivities[i] / (d1 * d2), d1 + d2});
        }
        accumulate(hh, cs, t, r, handp, freqs);
      }
    }
  }

  cs.H.resize(total);
  for (std::size_t i = 0; i < total; ++i) cs.H[i] = cached->direct[i] + cached->environment[i] + hh[i];
  if (keep_components) {
    cs.Hd = cached->direct;
    cs.He = cached->environment;
    cs.Hh = std::move(hh);
  }
  return cs;
}

}  // namespace pinsight::sim
