#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "dmr/combinations.hpp"
#include "dmr/model.hpp"

namespace dmr {

// The V combinations with the largest mean predicted variance.
struct HardSet {
  std::vector<CombinationIndex> indices;  // ascending
  int epoch_of_selection = 0;

  bool contains(CombinationIndex index) const;
  friend bool operator==(const HardSet&, const HardSet&) = default;
};

// Per-combination running sums of sigma^2 and element counts. Merging is
// commutative, so per-worker partials can be combined in any order.
class CombinationStats {
 public:
  struct Entry {
    double sum = 0.0;
    std::uint64_t count = 0;
  };

  explicit CombinationStats(std::size_t modalities = 1);

  std::size_t modalities() const { return modalities_; }
  void add(CombinationIndex index, double sum_of_variances, std::uint64_t elements);
  void merge(const CombinationStats& other);
  void reset();

  const Entry& entry(CombinationIndex index) const { return entries_.at(index); }
  // Index 0 is unused.
  const std::vector<Entry>& entries() const { return entries_; }
  double total_sum() const;
  std::uint64_t total_count() const;

  friend bool operator==(const CombinationStats&, const CombinationStats&);

 private:
  std::size_t modalities_;
  std::vector<Entry> entries_;
};

using VarianceMap = std::map<CombinationIndex, double>;

void update_stats(CombinationStats& stats, const CombinationMask& mask, const GaussianEmbedding& g);
// Adds every sample of a batched forward pass under its own mask.
void update_stats(CombinationStats& stats, const ForwardPass& pass, std::size_t positions);

// d_j = sum_j / count_j for every combination seen at least once.
VarianceMap combination_variances(const CombinationStats& stats);

// Top-V by d_j, ties to the smaller index. Throws InsufficientStatistics
// when fewer than V combinations have been observed.
HardSet select_hard_set(const VarianceMap& variances, std::size_t modalities, int epoch = 0);

// Called at the boundary before `epoch` starts. Returns nullopt before the
// warm-up ends; afterwards selects from the statistics gathered since the
// last call (falling back to `previous` if they are insufficient). The
// accumulators are reset in every case.
std::optional<HardSet> refresh_schedule(int epoch, int warmup, CombinationStats& stats,
                                        const std::optional<HardSet>& previous);

}  // namespace dmr
