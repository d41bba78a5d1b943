#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "json.hpp"

#include "pinsight/channel_sim.hpp"
#include "pinsight/eval/splits.hpp"
#include "pinsight/trace.hpp"

namespace pinsight::eval {

/// Synthetic dataset over a grid slice. Every domain types the same PIN list
/// with the same hand motion, so domains differ only by their scene.
struct SimSpec {
  GridSlice grid;
  int pins_per_domain = 20;
  std::uint64_t seed = 0;
  double snr_db = std::numeric_limits<double>::infinity();
  codec::Codebook codebook;

  void validate() const;
  nlohmann::json to_json() const;
  static SimSpec from_json(const nlohmann::json& j);
};

/// Digits drawn without replacement from repeated 0..9 decks, so every digit
/// appears floor or ceil of 6n/10 times.
std::vector<std::array<int, 6>> balanced_pins(int n, std::uint64_t seed);

std::vector<sim::RenderJob> make_jobs(const SimSpec& spec);
std::vector<PinTrace> simulate(const SimSpec& spec, bool parallel = true);

}  // namespace pinsight::eval
