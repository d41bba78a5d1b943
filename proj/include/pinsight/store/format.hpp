#pragma once

// On-disk layers of one trace. Every binary file opens with the same eight
// little-endian u32 fields: magic, version, T, n_sub, n_tx, n_stream,
// rate_milliHz, reserved (always 0). Samples are stored as 32-bit floats and
// widened to double on load.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "pinsight/bfi_codec.hpp"
#include "pinsight/trace.hpp"

namespace pinsight::store {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint32_t kMagicMatrix = 0x584d5350;    // "PSMX"
inline constexpr std::uint32_t kMagicFeatures = 0x54465350;  // "PSFT"
inline constexpr std::uint32_t kMagicPayload = 0x46425350;   // "PSBF"
inline constexpr std::size_t kHeaderBytes = 32;

struct FileHeader {
  std::uint32_t magic = 0;
  std::uint32_t version = kFormatVersion;
  std::uint32_t frames = 0;  // T
  std::uint32_t n_sub = 0;
  std::uint32_t n_tx = 0;
  std::uint32_t n_stream = 0;
  std::uint32_t rate_millihz = 0;
  std::uint32_t reserved = 0;

  bool operator==(const FileHeader&) const = default;
};

std::array<std::uint8_t, kHeaderBytes> encode_header(const FileHeader& h);
/// CorruptHeader on wrong magic, version or reserved field; Truncation when short.
FileHeader decode_header(std::span<const std::uint8_t> bytes, std::uint32_t expected_magic);

std::uint32_t rate_to_millihz(double rate);

/// Bytes following the header of a matrix file.
std::size_t matrix_payload_bytes(const FileHeader& h);

/// Decompressed matrices as interleaved (re, im) f32, [T][n_sub][n_tx][n_stream].
std::vector<std::uint8_t> encode_matrices(std::span<const codec::BfiMatrix> frames, double rate);
std::vector<codec::BfiMatrix> decode_matrices(std::span<const std::uint8_t> bytes, double* rate = nullptr);

/// Feature frames [T x columns] as f32; the header stores columns in n_sub and 1 in n_tx, n_stream.
std::vector<std::uint8_t> encode_features(const Eigen::MatrixXd& frames, double rate);
Eigen::MatrixXd decode_features(std::span<const std::uint8_t> bytes, double* rate = nullptr);

/// Raw reports: header, then u32 bits_phi, u32 bits_psi, then per frame an
/// f64 timestamp followed by the packed payload.
std::vector<std::uint8_t> encode_reports(std::span<const codec::AngleReport> reports, double rate);
std::vector<codec::AngleReport> decode_reports(std::span<const std::uint8_t> bytes, double* rate = nullptr);

/// Labels and provenance: digits, keystrokes, domain, seeds, sample rate and
/// optional fingertip ground truth.
nlohmann::json trace_sidecar(const PinTrace& trace);
void apply_sidecar(const nlohmann::json& j, PinTrace& trace);

/// File names derive from trace ids, so ids are limited to [A-Za-z0-9._-].
void check_trace_id(const std::string& id);

std::vector<std::uint8_t> read_file(const std::string& path);
/// Writes through a temporary file and renames it into place.
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);
void write_text(const std::string& path, const std::string& text);

}  // namespace pinsight::store
