#include "dmr/rng.hpp"

#include <sstream>

#include "dmr/errors.hpp"

namespace dmr {

namespace {

std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32), tag};
  return std::mt19937_64(seq);
}

}  // namespace

RandomSource::RandomSource(std::uint64_t seed) : engine_(seeded_engine(seed, 0)) {}

RandomSource::RandomSource(std::uint64_t seed, Stream stream)
    : engine_(seeded_engine(seed, static_cast<std::uint32_t>(stream))) {}

double RandomSource::normal() { return normal_(engine_); }

double RandomSource::uniform() {
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

std::uint64_t RandomSource::uniform_int(std::uint64_t lo, std::uint64_t hi) {
  return std::uniform_int_distribution<std::uint64_t>(lo, hi)(engine_);
}

bool RandomSource::bernoulli(double p) { return uniform() < p; }

std::string RandomSource::state() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void RandomSource::restore(std::string_view state) {
  std::istringstream in{std::string(state)};
  std::mt19937_64 engine;
  in >> engine;
  if (in.fail()) throw IntegrityError("malformed random engine state");
  engine_ = engine;
  normal_.reset();
}

}  // namespace dmr
