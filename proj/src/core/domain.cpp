#include "pinsight/domain.hpp"

#include <algorithm>
#include <cstdio>

#include "pinsight/error.hpp"

namespace pinsight {

void DomainKey::validate() const {
  if (room < 0 || room >= kRooms) throw Error(ErrorKind::InvalidConfig, "room out of range");
  if (position < 0 || position >= kPositions)
    throw Error(ErrorKind::InvalidConfig, "router position out of range");
  if (std::find(kChannels.begin(), kChannels.end(), channel) == kChannels.end())
    throw Error(ErrorKind::InvalidConfig, "unsupported channel " + std::to_string(channel));
  if (std::find(kReflectorAngles.begin(), kReflectorAngles.end(), reflector) ==
      kReflectorAngles.end())
    throw Error(ErrorKind::InvalidConfig, "unsupported reflector angle");
}

std::string DomainKey::str() const {
  char buf[40];
  std::snprintf(buf, sizeof buf, "r%02d-p%d-c%d-a%d", room, position, channel, reflector);
  return buf;
}

DomainKey DomainKey::parse(const std::string& text) {
  DomainKey k;
  int consumed = 0;
  if (std::sscanf(text.c_str(), "r%d-p%d-c%d-a%d%n", &k.room, &k.position, &k.channel,
                  &k.reflector, &consumed) != 4 ||
      consumed != static_cast<int>(text.size()))
    throw Error(ErrorKind::InvalidConfig, "malformed domain key '" + text + "'");
  k.validate();
  return k;
}

std::vector<DomainKey> full_domain_grid() {
  std::vector<DomainKey> out;
  out.reserve(kRooms * kPositions * kChannels.size() * kReflectorAngles.size());
  for (int r = 0; r < kRooms; ++r)
    for (int p = 0; p < kPositions; ++p)
      for (int c : kChannels)
        for (int a : kReflectorAngles) out.push_back({r, p, c, a});
  return out;
}

}  // namespace pinsight
