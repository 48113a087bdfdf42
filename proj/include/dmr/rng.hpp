#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace dmr {

// Independent random streams used by one training run. Each stream is seeded
// from the run seed and its tag through std::seed_seq, whose mixing function
// is fixed by the standard, so seeds are portable.
enum class Stream : std::uint32_t {
  init = 1,
  masks = 2,
  noise = 3,
  shuffle = 4,
  data_structure = 5,
  data_train = 6,
  data_test = 7,
  data_train_labels = 8,
  data_test_labels = 9,
};

class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed = 0);
  RandomSource(std::uint64_t seed, Stream stream);

  double normal();
  double uniform();
  // Uniform integer in [lo, hi].
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);
  bool bernoulli(double p);

  std::mt19937_64& engine() { return engine_; }

  // Textual engine state (the standard operator<< form of mt19937_64: 312
  // words followed by the position). The normal sampler's cached second
  // variate is not part of the state; call discard_cache() at the points
  // where state is captured.
  std::string state() const;
  void restore(std::string_view state);
  void discard_cache() { normal_.reset(); }

  friend bool operator==(const RandomSource& a, const RandomSource& b) {
    return a.engine_ == b.engine_;
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace dmr
