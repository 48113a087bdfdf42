#include "dmr/mining.hpp"

#include <algorithm>

#include "dmr/errors.hpp"

namespace dmr {

bool HardSet::contains(CombinationIndex index) const {
  return std::binary_search(indices.begin(), indices.end(), index);
}

CombinationStats::CombinationStats(std::size_t modalities)
    : modalities_(modalities), entries_(std::size_t{combination_count(modalities)} + 1) {
  if (modalities < 1 || modalities > kMaxModalities) throw InvalidInput("invalid modality count");
}

void CombinationStats::add(CombinationIndex index, double sum_of_variances, std::uint64_t elements) {
  if (index < 1 || index >= entries_.size()) throw InvalidInput("combination index out of range");
  entries_[index].sum += sum_of_variances;
  entries_[index].count += elements;
}

void CombinationStats::merge(const CombinationStats& other) {
  if (other.modalities_ != modalities_) throw InvalidInput("cannot merge stats of different V");
  for (std::size_t j = 1; j < entries_.size(); ++j) {
    entries_[j].sum += other.entries_[j].sum;
    entries_[j].count += other.entries_[j].count;
  }
}

void CombinationStats::reset() { std::fill(entries_.begin(), entries_.end(), Entry{}); }

double CombinationStats::total_sum() const {
  double s = 0.0;
  for (const auto& e : entries_) s += e.sum;
  return s;
}

std::uint64_t CombinationStats::total_count() const {
  std::uint64_t n = 0;
  for (const auto& e : entries_) n += e.count;
  return n;
}

bool operator==(const CombinationStats& a, const CombinationStats& b) {
  if (a.modalities_ != b.modalities_) return false;
  for (std::size_t j = 0; j < a.entries_.size(); ++j)
    if (a.entries_[j].sum != b.entries_[j].sum || a.entries_[j].count != b.entries_[j].count) return false;
  return true;
}

void update_stats(CombinationStats& stats, const CombinationMask& mask, const GaussianEmbedding& g) {
  if (mask.size() != stats.modalities()) throw InvalidInput("mask length does not match stats");
  stats.add(mask.index(), g.variance().sum(), static_cast<std::uint64_t>(g.log_sigma.size()));
}

void update_stats(CombinationStats& stats, const ForwardPass& pass, std::size_t positions) {
  const auto S = static_cast<Eigen::Index>(positions);
  for (std::size_t b = 0; b < pass.batch_size; ++b) {
    const auto block = pass.sigma.middleCols(static_cast<Eigen::Index>(b) * S, S);
    stats.add(pass.masks[b].index(), block.array().square().sum(),
              static_cast<std::uint64_t>(block.size()));
  }
}

VarianceMap combination_variances(const CombinationStats& stats) {
  VarianceMap d;
  const auto& entries = stats.entries();
  for (CombinationIndex j = 1; j < entries.size(); ++j)
    if (entries[j].count > 0) d[j] = entries[j].sum / static_cast<double>(entries[j].count);
  return d;
}

HardSet select_hard_set(const VarianceMap& variances, std::size_t modalities, int epoch) {
  if (variances.size() < modalities)
    throw InsufficientStatistics("only " + std::to_string(variances.size()) +
                                 " combinations observed, need " + std::to_string(modalities));
  std::vector<std::pair<CombinationIndex, double>> ranked(variances.begin(), variances.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  HardSet h;
  h.epoch_of_selection = epoch;
  for (std::size_t k = 0; k < modalities; ++k) h.indices.push_back(ranked[k].first);
  std::sort(h.indices.begin(), h.indices.end());
  return h;
}

std::optional<HardSet> refresh_schedule(int epoch, int warmup, CombinationStats& stats,
                                        const std::optional<HardSet>& previous) {
  if (warmup < 0) throw InvalidInput("warm-up must be non-negative");
  std::optional<HardSet> out;
  if (epoch >= warmup) {
    try {
      out = select_hard_set(combination_variances(stats), stats.modalities(), epoch);
    } catch (const InsufficientStatistics&) {
      out = previous;
    }
  }
  stats.reset();
  return out;
}

}  // namespace dmr
