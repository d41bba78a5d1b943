#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pinsight/domain.hpp"

namespace pinsight::eval {

enum class Factor { Room, Position, Channel, Reflector };
std::string to_string(Factor f);
Factor parse_factor(const std::string& s);

/// Instances of each factor included in an experiment.
struct GridSlice {
  std::vector<int> rooms;
  std::vector<int> positions;
  std::vector<int> channels;
  std::vector<int> reflectors;

  static GridSlice full();
  const std::vector<int>& instances(Factor f) const;
  std::vector<DomainKey> domains() const;  // in (room, position, channel, reflector) order
  void validate() const;
};

int factor_value(const DomainKey& key, Factor f);

enum class SplitId { RP, RW, RA, AP };
std::string to_string(SplitId id);
SplitId parse_split_id(const std::string& s);
/// The two factors each split holds out.
std::array<Factor, 2> held_out_factors(SplitId id);

struct SplitSpec {
  SplitId id = SplitId::RP;
  std::array<int, 2> unseen{};  // instance of each held-out factor, same order as held_out_factors

  void validate(const GridSlice& grid = GridSlice::full()) const;
};

struct SplitPlan {
  SplitSpec spec;
  std::vector<DomainKey> train;                 // seen domains
  std::array<std::vector<DomainKey>, 2> first;  // unseen instance of one factor x seen others
  std::vector<DomainKey> second;                // both unseen instances
  double val_fraction = 0.2;                    // of seen-domain digits, stratified by class
};

/// Throws InvalidInstance when an unseen instance is not part of the grid.
SplitPlan make_splits(const SplitSpec& spec, const GridSlice& grid = GridSlice::full());

/// Every (unseen_a, unseen_b) combination of the grid, in instance order.
std::vector<SplitSpec> all_instances(SplitId id, const GridSlice& grid = GridSlice::full());

/// Stratified class-level split of sample labels into (train, val) index lists.
struct IndexSplit {
  std::vector<int> train;
  std::vector<int> val;
};
IndexSplit stratified_split(std::span<const int> labels, double val_fraction, std::uint64_t seed);

}  // namespace pinsight::eval
