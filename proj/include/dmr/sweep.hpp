#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dmr/config.hpp"
#include "dmr/trainer.hpp"
#include "json.hpp"

namespace dmr {

// Sets a dotted config key ("alpha", "optimizer.learning_rate", ...) and
// re-validates. Throws ConfigError for unknown keys or bad values.
ExperimentConfig with_override(const ExperimentConfig& config, const std::string& key, const nlohmann::json& value);

struct GridAxis {
  std::string key;
  std::vector<nlohmann::json> values;
};

// Parses "alpha=0,1e-4,1e-3".
GridAxis parse_grid_axis(const std::string& text);

struct SweepPoint {
  std::vector<std::pair<std::string, nlohmann::json>> assignment;
  std::size_t replicate = 0;
  ExperimentConfig config;

  std::string label() const;
};

// Cartesian product of the axes times `replicates`. Replicate r uses
// seed = base.seed + r and data.seed = base.data.seed + r, shared by all
// grid points so that points are compared on identical data and draws.
std::vector<SweepPoint> expand_grid(const ExperimentConfig& base, const std::vector<GridAxis>& grid,
                                    std::size_t replicates = 1);

struct SweepResult {
  SweepPoint point;
  std::string status = "ok";  // "ok", "diverged" or "error: ..."
  double mean_variance = 0.0;
  double average_metric = 0.0;
  std::optional<RunRecord> record;
};

// A failed point is recorded with its status and does not stop the sweep.
std::vector<SweepResult> sweep(const ExperimentConfig& base, const std::vector<GridAxis>& grid,
                               std::size_t replicates = 1,
                               const std::function<void(const SweepResult&)>& on_result = {});

void write_sweep_csv(std::ostream& out, const std::vector<SweepResult>& results);

}  // namespace dmr
