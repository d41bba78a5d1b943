#include "pinsight/eval/splits.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "pinsight/error.hpp"

namespace pinsight::eval {

std::string to_string(Factor f) {
  switch (f) {
    case Factor::Room: return "room";
    case Factor::Position: return "position";
    case Factor::Channel: return "channel";
    case Factor::Reflector: return "reflector";
  }
  return "room";
}

Factor parse_factor(const std::string& s) {
  for (Factor f : {Factor::Room, Factor::Position, Factor::Channel, Factor::Reflector})
    if (to_string(f) == s) return f;
  throw Error(ErrorKind::InvalidConfig, "unknown factor '" + s + "'");
}

GridSlice GridSlice::full() {
  GridSlice g;
  for (int r = 0; r < kRooms; ++r) g.rooms.push_back(r);
  for (int p = 0; p < kPositions; ++p) g.positions.push_back(p);
  g.channels.assign(kChannels.begin(), kChannels.end());
  g.reflectors.assign(kReflectorAngles.begin(), kReflectorAngles.end());
  return g;
}

const std::vector<int>& GridSlice::instances(Factor f) const {
  switch (f) {
    case Factor::Room: return rooms;
    case Factor::Position: return positions;
    case Factor::Channel: return channels;
    case Factor::Reflector: return reflectors;
  }
  return rooms;
}

std::vector<DomainKey> GridSlice::domains() const {
  std::vector<DomainKey> out;
  for (int r : rooms)
    for (int p : positions)
      for (int c : channels)
        for (int a : reflectors) out.push_back({r, p, c, a});
  return out;
}

void GridSlice::validate() const {
  for (Factor f : {Factor::Room, Factor::Position, Factor::Channel, Factor::Reflector}) {
    const auto& v = instances(f);
    if (v.empty()) throw Error(ErrorKind::InvalidConfig, "grid has no " + to_string(f) + " instances");
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw Error(ErrorKind::InvalidConfig, "duplicate " + to_string(f) + " instance");
  }
  for (const auto& d : domains()) d.validate();
}

int factor_value(const DomainKey& key, Factor f) {
  switch (f) {
    case Factor::Room: return key.room;
    case Factor::Position: return key.position;
    case Factor::Channel: return key.channel;
    case Factor::Reflector: return key.reflector;
  }
  return 0;
}

std::string to_string(SplitId id) {
  switch (id) {
    case SplitId::RP: return "RP";
    case SplitId::RW: return "RW";
    case SplitId::RA: return "RA";
    case SplitId::AP: return "AP";
  }
  return "RP";
}

SplitId parse_split_id(const std::string& s) {
  for (SplitId id : {SplitId::RP, SplitId::RW, SplitId::RA, SplitId::AP})
    if (to_string(id) == s) return id;
  throw Error(ErrorKind::InvalidConfig, "unknown split id '" + s + "'");
}

std::array<Factor, 2> held_out_factors(SplitId id) {
  switch (id) {
    case SplitId::RP: return {Factor::Room, Factor::Position};
    case SplitId::RW: return {Factor::Room, Factor::Channel};
    case SplitId::RA: return {Factor::Room, Factor::Reflector};
    case SplitId::AP: return {Factor::Reflector, Factor::Position};
  }
  return {Factor::Room, Factor::Position};
}

void SplitSpec::validate(const GridSlice& grid) const {
  const auto f = held_out_factors(id);
  for (int i = 0; i < 2; ++i) {
    const auto& inst = grid.instances(f[i]);
    if (std::find(inst.begin(), inst.end(), unseen[i]) == inst.end())
      throw Error(ErrorKind::InvalidInstance,
                  to_string(id) + ": " + to_string(f[i]) + " " + std::to_string(unseen[i]) + " is not in the grid");
    if (inst.size() < 2)
      throw Error(ErrorKind::InvalidInstance, to_string(id) + ": " + to_string(f[i]) + " needs a seen instance");
  }
}

SplitPlan make_splits(const SplitSpec& spec, const GridSlice& grid) {
  grid.validate();
  spec.validate(grid);
  const auto f = held_out_factors(spec.id);
  SplitPlan plan;
  plan.spec = spec;
  for (const auto& d : grid.domains()) {
    const bool a = factor_value(d, f[0]) == spec.unseen[0];
    const bool b = factor_value(d, f[1]) == spec.unseen[1];
    if (a && b) {
      plan.second.push_back(d);
    } else if (a) {
      plan.first[0].push_back(d);
    } else if (b) {
      plan.first[1].push_back(d);
    } else {
      plan.train.push_back(d);
    }
  }
  return plan;
}

std::vector<SplitSpec> all_instances(SplitId id, const GridSlice& grid) {
  const auto f = held_out_factors(id);
  std::vector<SplitSpec> out;
  for (int a : grid.instances(f[0]))
    for (int b : grid.instances(f[1])) out.push_back({id, {a, b}});
  return out;
}

IndexSplit stratified_split(std::span<const int> labels, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw Error(ErrorKind::InvalidConfig, "validation fraction must be in [0,1)");
  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) by_class[labels[i]].push_back(i);
  IndexSplit out;
  for (auto& [label, idx] : by_class) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(label)));
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
      std::uniform_int_distribution<int> pick(0, i);
      std::swap(idx[i], idx[pick(rng)]);
    }
    const int n_val = static_cast<int>(std::lround(val_fraction * static_cast<double>(idx.size())));
    out.val.insert(out.val.end(), idx.begin(), idx.begin() + n_val);
    out.train.insert(out.train.end(), idx.begin() + n_val, idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  return out;
}

}  // namespace pinsight::eval
