#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dmr/config.hpp"
#include "dmr/losses.hpp"
#include "dmr/metrics.hpp"
#include "dmr/mining.hpp"
#include "dmr/model.hpp"
#include "dmr/optimizer.hpp"
#include "dmr/rng.hpp"

namespace dmr {

struct StepRecord {
  std::uint64_t step = 0;
  int epoch = 0;
  LossBreakdown loss;
  double mean_variance = 0.0;  // mean sigma^2 over the batch
  std::optional<HardSet> hard;
};

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  double mean_variance = 0.0;  // over every element seen this epoch
  VarianceMap variances;       // d_j of this epoch
  std::vector<std::uint64_t> counts;  // element counts by index (index 0 unused)
  std::optional<HardSet> hard_for_next;
};

struct RunRecord {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::optional<CombinationResultTable> results;
  double wall_clock_seconds = 0.0;
};

// Everything needed to continue a run bit-exactly from an epoch boundary.
struct TrainingState {
  ModelParameters params;
  OptimizerState optimizer;
  RandomSource mask_rng;
  RandomSource noise_rng;
  RandomSource shuffle_rng;
  int next_epoch = 0;
  std::optional<HardSet> hard;
};

TrainingState initial_state(const ExperimentConfig& config);

struct TrainOptions {
  // Stop once this many epochs (in total) are complete.
  std::optional<int> stop_after_epoch;
  bool evaluate = true;
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  TrainingState state;
  RunRecord record;
};

// Throws DivergenceError on a non-finite loss.
TrainResult train(const ExperimentConfig& config, const SplitDataset& data, const TrainOptions& options = {});
TrainResult train(const ExperimentConfig& config, const TrainOptions& options = {});
TrainResult resume(const ExperimentConfig& config, const SplitDataset& data, TrainingState state,
                   const TrainOptions& options = {});

// Mean sigma^2 of the last completed epoch.
double final_mean_variance(const RunRecord& record);

CombinationResultTable evaluate(const ExperimentConfig& config, const ModelParameters& params,
                                const Dataset& dataset, MetricKind kind);

// Log writers (formats documented in README).
void write_step_jsonl(std::ostream& out, const std::string& config_hash, const StepRecord& step);
void write_mining_csv_header(std::ostream& out);
void write_mining_csv_rows(std::ostream& out, const EpochRecord& epoch, std::size_t modalities);

}  // namespace dmr
