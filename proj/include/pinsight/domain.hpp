#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace pinsight {

inline constexpr std::array<int, 4> kChannels = {44, 56, 104, 120};
inline constexpr std::array<int, 3> kReflectorAngles = {0, 45, 90};
inline constexpr int kRooms = 16;
inline constexpr int kPositions = 5;

/// (room, router position, Wi-Fi channel, reflector angle) of one physical setting.
struct DomainKey {
  int room = 0;
  int position = 0;
  int channel = 44;
  int reflector = 0;

  void validate() const;
  /// Stable text form, e.g. "r03-p1-c44-a45".
  std::string str() const;
  static DomainKey parse(const std::string& text);

  auto operator<=>(const DomainKey&) const = default;
};

/// All 16 x 5 x 4 x 3 = 960 keys in (room, position, channel, reflector) order.
std::vector<DomainKey> full_domain_grid();

/// splitmix64 step; used to derive independent deterministic seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(a) ^ (b + 0x632be59bd9b4e019ULL));
}

}  // namespace pinsight
