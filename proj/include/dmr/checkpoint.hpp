#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dmr/config.hpp"
#include "dmr/trainer.hpp"

namespace dmr {

// Binary checkpoint archive. All integers are little-endian; strings are a
// u32 byte length followed by UTF-8 bytes; doubles are IEEE-754 binary64.
//
//   magic      8 bytes  "DMRCKPT\0"
//   version    u32      1
//   length     u64      payload byte count
//   payload    ...
//   checksum   32 bytes SHA-256 of the payload
//
// Payload, in order:
//   config_hash   string  hex SHA-256 of config_json
//   config_json   string  canonical experiment config
//   next_epoch    u32     epochs completed
//   opt_step      u64     optimizer steps taken
//   hard_present  u8      0 or 1; if 1: hard_epoch u32, count u32, count x u32 indices
//   rng_count     u32     then rng_count x (name string, state string); the state
//                         is the textual std::mt19937_64 state (312 words + position)
//   array_count   u32     then array_count x (name string, rows u32, cols u32,
//                         rows*cols doubles in column-major order)
//
// Arrays carry every trainable tensor under its parameter name, the
// normalization running statistics, and the momentum buffers under
// "velocity/<parameter name>".
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ExperimentConfig config;
  std::string config_hash;
  TrainingState state;
};

std::vector<std::uint8_t> serialize_checkpoint(const ExperimentConfig& config, const TrainingState& state);
// Throws IntegrityError on framing/checksum problems and IncompatibleCheckpoint
// when the arrays do not fit the embedded configuration.
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const ExperimentConfig& config, const TrainingState& state);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Throws IncompatibleCheckpoint unless the checkpoint's config hash equals
// that of `expected`.
void require_same_config(const Checkpoint& checkpoint, const ExperimentConfig& expected);
// Throws IncompatibleCheckpoint unless the architectures match.
void require_same_architecture(const Checkpoint& checkpoint, const ExperimentConfig& expected);

}  // namespace dmr
