#include "pinsight/bfi_codec.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "json.hpp"

#include "pinsight/error.hpp"

namespace pinsight::codec {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_two_pi(double a) {
  double w = std::fmod(a, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  if (w >= kTwoPi) w = 0.0;
  return w;
}

int bits_for(AngleKind kind, const Codebook& cb) {
  return kind == AngleKind::Phi ? cb.bits_phi : cb.bits_psi;
}

// Apply G_{l,c}(psi) from the left: rows c and l of x.
void rotate_rows(Eigen::MatrixXcd& x, int c, int l, double psi) {
  const double cs = std::cos(psi), sn = std::sin(psi);
  for (int k = 0; k < x.cols(); ++k) {
    const cplx a = x(c, k), b = x(l, k);
    x(c, k) = cs * a + sn * b;
    x(l, k) = -sn * a + cs * b;
  }
}

// Apply G_{l,c}(psi)^T from the left.
void rotate_rows_transposed(Eigen::MatrixXcd& x, int c, int l, double psi) {
  rotate_rows(x, c, l, -psi);
}

}  // namespace

void StreamConfig::validate() const {
  if (n_tx < 1 || n_stream < 1 || n_stream > n_tx)
    throw Error(ErrorKind::InvalidConfig, "need 1 <= n_stream <= n_tx");
  if (n_sub < 1) throw Error(ErrorKind::InvalidConfig, "n_sub must be >= 1");
  if (angle_count(n_tx, n_stream) <= 0)
    throw Error(ErrorKind::InvalidConfig, "configuration carries no angles");
}

int StreamConfig::n_angles() const { return angle_count(n_tx, n_stream); }

void Codebook::validate() const {
  for (const auto& cb : kCodebooks)
    if (cb == *this) return;
  throw Error(ErrorKind::InvalidConfig,
              "codebook (" + std::to_string(bits_phi) + "," + std::to_string(bits_psi) +
                  ") is not one of (4,2) (6,4) (7,5) (9,7)");
}

int Codebook::bits_per_subcarrier(const StreamConfig& cfg) const {
  int total = 0;
  for (const auto& slot : angle_layout(cfg.n_tx, cfg.n_stream)) total += bits_for(slot.kind, *this);
  return total;
}

int angle_count(int n_tx, int n_stream) {
  if (n_tx < 1 || n_stream < 1 || n_stream > n_tx)
    throw Error(ErrorKind::InvalidConfig, "need 1 <= n_stream <= n_tx");
  int total = 0;
  for (int i = 1; i <= std::min(n_stream, n_tx - 1); ++i) total += 2 * (n_tx - i);
  return total;
}

std::vector<AngleSlot> angle_layout(int n_tx, int n_stream) {
  angle_count(n_tx, n_stream);  // validates
  std::vector<AngleSlot> slots;
  const int stages = std::min(n_stream, n_tx - 1);
  for (int c = 0; c < stages; ++c) {
    for (int r = c; r < n_tx - 1; ++r) slots.push_back({AngleKind::Phi, r, c});
    for (int l = c + 1; l < n_tx; ++l) slots.push_back({AngleKind::Psi, l, c});
  }
  return slots;
}

double dequantize(int index, AngleKind kind, const Codebook& cb) {
  const int b = bits_for(kind, cb);
  if (index < 0 || index >= (1 << b))
    throw Error(ErrorKind::IndexOutOfRange,
                "angle index " + std::to_string(index) + " outside " + std::to_string(b) + " bits");
  if (kind == AngleKind::Phi) return index * kPi / (1 << (b - 1)) + kPi / (1 << b);
  return index * kPi / (1 << (b + 1)) + kPi / (1 << (b + 2));
}

int quantize(double radians, AngleKind kind, const Codebook& cb) {
  const int b = bits_for(kind, cb);
  const int n = 1 << b;
  if (kind == AngleKind::Phi) {
    const double step = kPi / (1 << (b - 1));
    const double x = (wrap_two_pi(radians) - kPi / n) / step;  // in [-0.5, n - 0.5)
    int k = static_cast<int>(std::ceil(x - 0.5));
    // Both ends of the wrap are equidistant from n-1 and 0 at the boundary; prefer 0.
    if (k < 0 || k >= n || (k == n - 1 && x >= n - 0.5)) k = 0;
    return k;
  }
  const double step = kPi / (1 << (b + 1));
  const double x = (radians - kPi / (1 << (b + 2))) / step;
  const int k = static_cast<int>(std::ceil(x - 0.5));
  return std::clamp(k, 0, n - 1);
}

void AngleReport::validate() const {
  config.validate();
  codebook.validate();
  const auto slots = angle_layout(config.n_tx, config.n_stream);
  if (angles.size() != static_cast<std::size_t>(config.n_sub) * slots.size())
    throw Error(ErrorKind::ShapeMismatch, "angle grid does not match n_sub x n_angles");
  for (int s = 0; s < config.n_sub; ++s)
    for (std::size_t a = 0; a < slots.size(); ++a)
      if (at(s, static_cast<int>(a)) >= (1u << bits_for(slots[a].kind, codebook)))
        throw Error(ErrorKind::IndexOutOfRange, "angle index exceeds codebook width");
}

Eigen::MatrixXcd BfiMatrix::subcarrier(int sub) const {
  Eigen::MatrixXcd m(n_tx, n_stream);
  for (int r = 0; r < n_tx; ++r)
    for (int c = 0; c < n_stream; ++c) m(r, c) = at(sub, r, c);
  return m;
}

void BfiMatrix::set_subcarrier(int sub, const Eigen::MatrixXcd& m) {
  for (int r = 0; r < n_tx; ++r)
    for (int c = 0; c < n_stream; ++c) at(sub, r, c) = m(r, c);
}

Eigen::MatrixXcd ladder(int n_tx, int n_stream, std::span<const double> angles) {
  const auto slots = angle_layout(n_tx, n_stream);
  if (angles.size() != slots.size())
    throw Error(ErrorKind::ShapeMismatch, "angle vector length does not match layout");
  Eigen::MatrixXcd x = Eigen::MatrixXcd::Identity(n_tx, n_stream);
  // V = prod_c [D_c * prod_l G_{l,c}^T] * I; apply the innermost stage first.
  const int stages = std::min(n_stream, n_tx - 1);
  std::size_t end = slots.size();
  for (int c = stages - 1; c >= 0; --c) {
    const int count = 2 * (n_tx - 1 - c);
    const std::size_t begin = end - count;
    const std::size_t psi_begin = begin + count / 2;
    for (std::size_t k = end; k-- > psi_begin;)
      rotate_rows_transposed(x, c, slots[k].row, angles[k]);
    for (std::size_t k = begin; k < psi_begin; ++k)
      x.row(slots[k].row) *= std::polar(1.0, angles[k]);
    end = begin;
  }
  return x;
}

std::vector<double> extract_angles(const Eigen::MatrixXcd& v) {
  const int n_tx = static_cast<int>(v.rows());
  const int n_stream = static_cast<int>(v.cols());
  const auto slots = angle_layout(n_tx, n_stream);
  Eigen::MatrixXcd x = v;
  for (int c = 0; c < n_stream; ++c) x.col(c) *= std::polar(1.0, -std::arg(x(n_tx - 1, c)));

  std::vector<double> out;
  out.reserve(slots.size());
  const int stages = std::min(n_stream, n_tx - 1);
  for (int c = 0; c < stages; ++c) {
    for (int r = c; r < n_tx - 1; ++r) {
      const double phi = wrap_two_pi(std::arg(x(r, c)));
      x.row(r) *= std::polar(1.0, -phi);
      out.push_back(phi);
    }
    for (int l = c + 1; l < n_tx; ++l) {
      const double psi = std::clamp(std::atan2(x(l, c).real(), x(c, c).real()), 0.0, kPi / 2);
      rotate_rows(x, c, l, psi);
      out.push_back(psi);
    }
  }
  return out;
}

BfiMatrix decompress(const AngleReport& report) {
  report.validate();
  const auto& cfg = report.config;
  const auto slots = angle_layout(cfg.n_tx, cfg.n_stream);
  BfiMatrix out(cfg.n_sub, cfg.n_tx, cfg.n_stream);
  std::vector<double> angles(slots.size());
  for (int s = 0; s < cfg.n_sub; ++s) {
    for (std::size_t a = 0; a < slots.size(); ++a)
      angles[a] = dequantize(report.at(s, static_cast<int>(a)), slots[a].kind, report.codebook);
    Eigen::MatrixXcd v = ladder(cfg.n_tx, cfg.n_stream, angles);
    // The last row is real by construction; drop rounding residue.
    for (int c = 0; c < cfg.n_stream; ++c) v(cfg.n_tx - 1, c) = v(cfg.n_tx - 1, c).real();
    out.set_subcarrier(s, v);
  }
  return out;
}

AngleReport compress(const BfiMatrix& matrix, const Codebook& cb, double timestamp,
                     double tolerance) {
  cb.validate();
  AngleReport report;
  report.config = {matrix.n_tx, matrix.n_stream, matrix.n_sub};
  report.config.validate();
  report.codebook = cb;
  report.timestamp = timestamp;
  const auto slots = angle_layout(matrix.n_tx, matrix.n_stream);
  report.angles.resize(static_cast<std::size_t>(matrix.n_sub) * slots.size());
  for (int s = 0; s < matrix.n_sub; ++s) {
    const Eigen::MatrixXcd v = matrix.subcarrier(s);
    const Eigen::MatrixXcd gram = v.adjoint() * v;
    const double dev =
        (gram - Eigen::MatrixXcd::Identity(matrix.n_stream, matrix.n_stream)).cwiseAbs().maxCoeff();
    if (!(dev <= tolerance))
      throw Error(ErrorKind::NonOrthonormalInput,
                  "subcarrier " + std::to_string(s) + " deviates by " + std::to_string(dev));
    const auto angles = extract_angles(v);
    for (std::size_t a = 0; a < slots.size(); ++a)
      report.at(s, static_cast<int>(a)) =
          static_cast<std::uint16_t>(quantize(angles[a], slots[a].kind, cb));
  }
  return report;
}

std::size_t payload_size(const StreamConfig& cfg, const Codebook& cb) {
  const std::size_t bits = static_cast<std::size_t>(cfg.n_sub) * cb.bits_per_subcarrier(cfg);
  return (bits + 7) / 8;
}

std::vector<std::uint8_t> serialize_payload(const AngleReport& report) {
  report.validate();
  const auto slots = angle_layout(report.config.n_tx, report.config.n_stream);
  std::vector<std::uint8_t> out(payload_size(report.config, report.codebook), 0);
  std::size_t bit = 0;
  for (int s = 0; s < report.config.n_sub; ++s) {
    for (std::size_t a = 0; a < slots.size(); ++a) {
      const int width = bits_for(slots[a].kind, report.codebook);
      const unsigned value = report.at(s, static_cast<int>(a));
      for (int k = width - 1; k >= 0; --k, ++bit)
        if ((value >> k) & 1u) out[bit / 8] |= static_cast<std::uint8_t>(0x80u >> (bit % 8));
    }
  }
  return out;
}

AngleReport parse_payload(std::span<const std::uint8_t> bytes, const StreamConfig& cfg,
                          const Codebook& cb, double timestamp) {
  cfg.validate();
  cb.validate();
  const std::size_t expected = payload_size(cfg, cb);
  if (bytes.size() != expected)
    throw Error(ErrorKind::TruncatedPayload, "payload has " + std::to_string(bytes.size()) +
                                                 " bytes, expected " + std::to_string(expected));
  const auto slots = angle_layout(cfg.n_tx, cfg.n_stream);
  AngleReport report;
  report.config = cfg;
  report.codebook = cb;
  report.timestamp = timestamp;
  report.angles.resize(static_cast<std::size_t>(cfg.n_sub) * slots.size());
  std::size_t bit = 0;
  for (int s = 0; s < cfg.n_sub; ++s) {
    for (std::size_t a = 0; a < slots.size(); ++a) {
      const int width = bits_for(slots[a].kind, cb);
      unsigned value = 0;
      for (int k = 0; k < width; ++k, ++bit)
        value = (value << 1) | ((bytes[bit / 8] >> (7 - bit % 8)) & 1u);
      report.at(s, static_cast<int>(a)) = static_cast<std::uint16_t>(value);
    }
  }
  // Padding bits after the last angle are reserved and must be zero.
  for (; bit < expected * 8; ++bit)
    if ((bytes[bit / 8] >> (7 - bit % 8)) & 1u)
      throw Error(ErrorKind::ReservedBitViolation, "non-zero padding bit " + std::to_string(bit));
  return report;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

std::vector<std::uint8_t> from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) throw Error(ErrorKind::TruncatedPayload, "odd-length hex payload");
  std::vector<std::uint8_t> out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int hi = nibble(hex[2 * i]), lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(ErrorKind::TruncatedPayload, "invalid hex digit");
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return out;
}

std::string to_sidecar_line(const AngleReport& report) {
  nlohmann::json j;
  j["t"] = report.timestamp;
  j["cfg"] = {report.config.n_tx, report.config.n_stream, report.config.n_sub};
  j["cb"] = {report.codebook.bits_phi, report.codebook.bits_psi};
  j["payload"] = to_hex(serialize_payload(report));
  return j.dump();
}

AngleReport from_sidecar_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
    StreamConfig cfg{j.at("cfg").at(0).get<int>(), j.at("cfg").at(1).get<int>(),
                     j.at("cfg").at(2).get<int>()};
    Codebook cb{j.at("cb").at(0).get<int>(), j.at("cb").at(1).get<int>()};
    const auto bytes = from_hex(j.at("payload").get<std::string>());
    return parse_payload(bytes, cfg, cb, j.at("t").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::TruncatedPayload, std::string("malformed sidecar record: ") + e.what());
  }
}

}  // namespace pinsight::codec
