#include "dmr/combinations.hpp"

#include <algorithm>

#include "dmr/errors.hpp"

namespace dmr {

namespace {

void check_modalities(std::size_t modalities) {
  if (modalities < 1) throw InvalidInput("modality count must be at least 1");
  if (modalities > kMaxModalities)
    throw InvalidInput("modality count exceeds " + std::to_string(kMaxModalities));
}

}  // namespace

CombinationMask::CombinationMask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  check_modalities(bits_.size());
  for (auto& b : bits_) {
    if (b > 1) throw InvalidInput("mask bits must be 0 or 1");
  }
  if (std::none_of(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b != 0; }))
    throw InvalidInput("all-zero combination mask");
}

CombinationMask CombinationMask::from_index(CombinationIndex index, std::size_t modalities) {
  check_modalities(modalities);
  if (index < 1 || index > combination_count(modalities))
    throw InvalidInput("combination index " + std::to_string(index) + " out of range for V=" +
                       std::to_string(modalities));
  std::vector<std::uint8_t> bits(modalities);
  for (std::size_t k = 0; k < modalities; ++k) bits[k] = (index >> k) & 1u;
  return CombinationMask(std::move(bits));
}

CombinationMask CombinationMask::from_bitstring(std::string_view text) {
  std::vector<std::uint8_t> bits;
  bits.reserve(text.size());
  for (char c : text) {
    if (c != '0' && c != '1') throw InvalidInput("mask bit-string may contain only 0 and 1");
    bits.push_back(static_cast<std::uint8_t>(c - '0'));
  }
  return CombinationMask(std::move(bits));
}

CombinationMask CombinationMask::full(std::size_t modalities) {
  return CombinationMask(std::vector<std::uint8_t>(modalities, 1));
}

CombinationIndex CombinationMask::index() const {
  if (bits_.empty()) throw InvalidInput("empty combination mask");
  CombinationIndex j = 0;
  for (std::size_t k = 0; k < bits_.size(); ++k) j |= CombinationIndex{bits_[k]} << k;
  return j;
}

std::string CombinationMask::bitstring() const {
  std::string out;
  out.reserve(bits_.size());
  for (auto b : bits_) out.push_back(b ? '1' : '0');
  return out;
}

CombinationIndex mask_to_index(const CombinationMask& mask) { return mask.index(); }

CombinationMask index_to_mask(CombinationIndex index, std::size_t modalities) {
  return CombinationMask::from_index(index, modalities);
}

std::vector<CombinationMask> enumerate_combinations(std::size_t modalities) {
  check_modalities(modalities);
  std::vector<CombinationMask> out;
  const auto n = combination_count(modalities);
  out.reserve(n);
  for (CombinationIndex j = 1; j <= n; ++j) out.push_back(CombinationMask::from_index(j, modalities));
  return out;
}

DropoutPolicy DropoutPolicy::uniform_nonempty(std::size_t modalities) {
  check_modalities(modalities);
  DropoutPolicy p;
  p.kind_ = Kind::uniform_nonempty;
  p.modalities_ = modalities;
  return p;
}

DropoutPolicy DropoutPolicy::bernoulli(std::size_t modalities, double keep_probability) {
  check_modalities(modalities);
  if (!(keep_probability > 0.0 && keep_probability <= 1.0))
    throw InvalidInput("keep probability must lie in (0, 1]");
  DropoutPolicy p;
  p.kind_ = Kind::bernoulli;
  p.modalities_ = modalities;
  p.keep_probability_ = keep_probability;
  return p;
}

DropoutPolicy DropoutPolicy::fixed(CombinationMask mask) {
  if (mask.size() == 0) throw InvalidInput("fixed dropout policy needs a valid mask");
  DropoutPolicy p;
  p.kind_ = Kind::fixed;
  p.modalities_ = mask.size();
  p.fixed_ = std::move(mask);
  return p;
}

std::string DropoutPolicy::kind_name() const {
  switch (kind_) {
    case Kind::uniform_nonempty: return "uniform-nonempty";
    case Kind::bernoulli: return "per-modality-bernoulli";
    case Kind::fixed: return "fixed";
  }
  return "unknown";
}

CombinationMask sample_dropout_mask(const DropoutPolicy& policy, RandomSource& rng) {
  switch (policy.kind()) {
    case DropoutPolicy::Kind::fixed:
      return policy.fixed_mask();
    case DropoutPolicy::Kind::uniform_nonempty: {
      const auto j = rng.uniform_int(1, combination_count(policy.modalities()));
      return CombinationMask::from_index(static_cast<CombinationIndex>(j), policy.modalities());
    }
    case DropoutPolicy::Kind::bernoulli: {
      std::vector<std::uint8_t> bits(policy.modalities());
      for (;;) {
        bool any = false;
        for (auto& b : bits) {
          b = rng.bernoulli(policy.keep_probability()) ? 1 : 0;
          any = any || b;
        }
        if (any) return CombinationMask(bits);
      }
    }
  }
  throw InvalidInput("unknown dropout policy");
}

std::vector<FeatureMap> apply_mask(std::span<const FeatureMap> embeddings,
                                   const CombinationMask& mask) {
  if (embeddings.size() != mask.size())
    throw InvalidInput("mask length " + std::to_string(mask.size()) + " does not match " +
                       std::to_string(embeddings.size()) + " embeddings");
  std::vector<FeatureMap> out;
  out.reserve(embeddings.size());
  for (std::size_t v = 0; v < embeddings.size(); ++v) {
    if (mask.present(v))
      out.push_back(embeddings[v]);
    else
      out.push_back(FeatureMap::Zero(embeddings[v].rows(), embeddings[v].cols()));
  }
  return out;
}

}  // namespace dmr
