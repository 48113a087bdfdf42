#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dmr/rng.hpp"

namespace dmr {

// C channels by S spatial positions. S == 1 degenerates to a vector.
using FeatureMap = Eigen::MatrixXd;

using CombinationIndex = std::uint32_t;

inline constexpr std::size_t kMaxModalities = 20;

// Which modalities are present for one sample. Bit k-1 of the index is the
// indicator of modality k, so [1,0,1] has index 5.
class CombinationMask {
 public:
  CombinationMask() = default;
  explicit CombinationMask(std::vector<std::uint8_t> bits);

  static CombinationMask from_index(CombinationIndex index, std::size_t modalities);
  // Parses "101" (modality 1 first).
  static CombinationMask from_bitstring(std::string_view bits);
  static CombinationMask full(std::size_t modalities);

  CombinationIndex index() const;
  std::string bitstring() const;

  std::size_t size() const { return bits_.size(); }
  bool present(std::size_t modality) const { return bits_.at(modality) != 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  friend bool operator==(const CombinationMask&, const CombinationMask&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

CombinationIndex mask_to_index(const CombinationMask& mask);
CombinationMask index_to_mask(CombinationIndex index, std::size_t modalities);

inline CombinationIndex combination_count(std::size_t modalities) {
  return (CombinationIndex{1} << modalities) - 1;
}

// All 2^V - 1 non-empty masks, ascending by index.
std::vector<CombinationMask> enumerate_combinations(std::size_t modalities);

class DropoutPolicy {
 public:
  enum class Kind { uniform_nonempty, bernoulli, fixed };

  static DropoutPolicy uniform_nonempty(std::size_t modalities);
  // Each modality is kept with probability keep_probability; the all-zero
  // outcome is rejected and redrawn.
  static DropoutPolicy bernoulli(std::size_t modalities, double keep_probability);
  static DropoutPolicy fixed(CombinationMask mask);

  Kind kind() const { return kind_; }
  std::size_t modalities() const { return modalities_; }
  double keep_probability() const { return keep_probability_; }
  const CombinationMask& fixed_mask() const { return fixed_; }

  std::string kind_name() const;

 private:
  Kind kind_ = Kind::uniform_nonempty;
  std::size_t modalities_ = 0;
  double keep_probability_ = 0.5;
  CombinationMask fixed_;
};

CombinationMask sample_dropout_mask(const DropoutPolicy& policy, RandomSource& rng);

// Embedding v is zeroed when modality v is absent and left untouched otherwise.
std::vector<FeatureMap> apply_mask(std::span<const FeatureMap> embeddings,
                                   const CombinationMask& mask);

}  // namespace dmr
