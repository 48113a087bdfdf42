#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "dmr/combinations.hpp"
#include "dmr/datasynth.hpp"
#include "dmr/metrics.hpp"
#include "dmr/model.hpp"

namespace dmr {

enum class TrainingMode {
  vanilla,  // embedding pinned to mu, no distribution or hard-combination terms
  dmr,      // sampled embedding + distribution regularizer
  dmr_hcr,  // dmr + hard-combination regularizer
};

std::string to_string(TrainingMode m);
TrainingMode training_mode_from_string(const std::string& name);

struct OptimizerConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int warmup_epochs = 0;         // linear ramp of the learning rate
  std::vector<int> milestones;   // epochs at which the rate is multiplied by decay
  double decay = 0.1;
};

struct ExperimentConfig {
  TrainingMode mode = TrainingMode::dmr_hcr;
  double alpha = 1e-3;
  double beta = 0.7;
  int epochs = 60;
  std::size_t batch_size = 32;
  int hcr_warmup = 5;
  std::uint64_t seed = 0;
  // Debug switch: draw eps = 0 on the sampled path.
  bool disable_sampling_noise = false;
  // 1-based modality trained on its own (the unimodal baseline); 0 uses all.
  std::size_t unimodal = 0;
  MetricKind metric = MetricKind::accuracy;

  SyntheticSpec data;
  // input_dims and classes are taken from data.
  ModelConfig model;
  DropoutPolicy dropout = DropoutPolicy::uniform_nonempty(3);
  OptimizerConfig optimizer;

  // Vanilla ignores alpha and beta; dmr ignores beta.
  double effective_alpha() const;
  double effective_beta() const;
  bool samples_embedding() const { return mode != TrainingMode::vanilla; }
  bool uses_hard_set() const { return mode == TrainingMode::dmr_hcr; }

  // Modalities the model sees: 1 for a unimodal baseline, else data.modalities().
  std::size_t modalities() const { return unimodal ? 1 : data.modalities(); }
  ModelConfig model_config() const;
  void validate() const;  // throws ConfigError
};

// The dataset the config trains and evaluates on: generated from `data`
// and, for a unimodal baseline, reduced to the selected modality.
SplitDataset experiment_data(const ExperimentConfig& config);

// The reference benchmark: V=3, M=4, modality 1 at low SNR.
ExperimentConfig standard_config();
// A configuration small enough for exhaustive finite differences.
ExperimentConfig tiny_config();

nlohmann::json synthetic_spec_to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j, const SyntheticSpec& defaults = {});

nlohmann::json config_to_json(const ExperimentConfig& config);
// Missing keys keep the values of `defaults`; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j,
                                  const ExperimentConfig& defaults = standard_config());

// SHA-256 (hex) of the canonical JSON form.
std::string config_hash(const ExperimentConfig& config);

}  // namespace dmr
