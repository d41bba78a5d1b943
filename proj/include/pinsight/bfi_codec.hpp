#pragma once

// 802.11ac compressed beamforming feedback: Givens-rotation angle ladder,
// codebook quantization, and the bit-packed report payload.

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace pinsight::codec {

using cplx = std::complex<double>;

struct StreamConfig {
  int n_tx = 4;      // beamformer antennas (matrix rows)
  int n_stream = 2;  // feedback columns
  int n_sub = 234;

  void validate() const;
  int n_angles() const;
  bool operator==(const StreamConfig&) const = default;
};

/// One of the four standard (phi, psi) bit-width pairs.
struct Codebook {
  int bits_phi = 9;
  int bits_psi = 7;

  void validate() const;
  int bits_per_subcarrier(const StreamConfig& cfg) const;
  bool operator==(const Codebook&) const = default;
};

/// The four codebooks ordered coarse to fine.
inline constexpr Codebook kCodebooks[] = {{4, 2}, {6, 4}, {7, 5}, {9, 7}};

enum class AngleKind { Phi, Psi };

/// Position of one angle inside the per-subcarrier angle vector.
/// `row` is the matrix row the angle acts on (phi) or the row it zeroes (psi);
/// `col` is the ladder stage (column).
struct AngleSlot {
  AngleKind kind;
  int row;
  int col;
};

/// Sum over ladder stages of 2*(n_tx - i); throws InvalidConfig.
int angle_count(int n_tx, int n_stream);

/// Standard order: per column, phi top-down then psi top-down.
std::vector<AngleSlot> angle_layout(int n_tx, int n_stream);

double dequantize(int index, AngleKind kind, const Codebook& cb);

/// Nearest grid index; ties go to the lower index. Phi wraps around 2*pi.
int quantize(double radians, AngleKind kind, const Codebook& cb);

struct AngleReport {
  StreamConfig config;
  Codebook codebook;
  std::vector<std::uint16_t> angles;  // [n_sub x n_angles], row-major
  double timestamp = 0.0;

  std::uint16_t at(int sub, int angle) const {
    return angles[static_cast<std::size_t>(sub) * config.n_angles() + angle];
  }
  std::uint16_t& at(int sub, int angle) {
    return angles[static_cast<std::size_t>(sub) * config.n_angles() + angle];
  }
  /// Throws if shape or any index violates the codebook.
  void validate() const;
  bool operator==(const AngleReport&) const = default;
};

/// Complex beamforming matrices, one n_tx x n_stream block per subcarrier.
struct BfiMatrix {
  int n_sub = 0;
  int n_tx = 0;
  int n_stream = 0;
  std::vector<cplx> values;  // [n_sub][n_tx][n_stream]

  BfiMatrix() = default;
  BfiMatrix(int subs, int tx, int streams)
      : n_sub(subs), n_tx(tx), n_stream(streams),
        values(static_cast<std::size_t>(subs) * tx * streams) {}

  std::size_t index(int sub, int tx, int stream) const {
    return (static_cast<std::size_t>(sub) * n_tx + tx) * n_stream + stream;
  }
  cplx at(int sub, int tx, int stream) const { return values[index(sub, tx, stream)]; }
  cplx& at(int sub, int tx, int stream) { return values[index(sub, tx, stream)]; }

  Eigen::MatrixXcd subcarrier(int sub) const;
  void set_subcarrier(int sub, const Eigen::MatrixXcd& m);
};

BfiMatrix decompress(const AngleReport& report);

/// Inverse ladder followed by quantization. Input columns must be
/// orthonormal within `tolerance`.
AngleReport compress(const BfiMatrix& matrix, const Codebook& cb, double timestamp = 0.0,
                     double tolerance = 1e-6);

/// Continuous (unquantized) ladder angles of one orthonormal block, in layout order.
std::vector<double> extract_angles(const Eigen::MatrixXcd& v);

/// Ladder product for one subcarrier from continuous angles in layout order.
Eigen::MatrixXcd ladder(int n_tx, int n_stream, std::span<const double> angles);

std::size_t payload_size(const StreamConfig& cfg, const Codebook& cb);
std::vector<std::uint8_t> serialize_payload(const AngleReport& report);
AngleReport parse_payload(std::span<const std::uint8_t> bytes, const StreamConfig& cfg,
                          const Codebook& cb, double timestamp = 0.0);

/// Ingestion sidecar: {"t":..,"cfg":[n_tx,n_stream,n_sub],"cb":[b_phi,b_psi],"payload":"hex"}
std::string to_sidecar_line(const AngleReport& report);
AngleReport from_sidecar_line(std::string_view line);

std::string to_hex(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> from_hex(std::string_view hex);

}  // namespace pinsight::codec
