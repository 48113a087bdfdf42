#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dmr/config.hpp"
#include "dmr/model.hpp"

namespace dmr {

inline constexpr std::size_t kGradientCheckMaxParameters = 2000;

struct GradientGroupReport {
  std::string group;
  std::size_t parameters = 0;
  double max_abs_gradient = 0.0;
  // max |analytic - numeric| over the group, divided by the largest
  // gradient magnitude (analytic or numeric) in the group
  double max_relative_error = 0.0;
};

struct GradientCheckReport {
  std::vector<GradientGroupReport> groups;
  double tolerance = 0.0;
  bool passed = false;
};

// Test fixture hook: lets a caller tamper with the analytic gradient.
using GradientHook = std::function<void(ModelParameters& gradients)>;

struct GradientCheckOptions {
  double step = 1e-5;
  GradientHook corrupt;
  // Applied to the freshly initialized parameters before checking.
  std::function<void(ModelParameters&)> prepare;
};

// Central finite differences of the total training loss on one batch of the
// configured training data (batch statistics, fixed masks, eps and hard set).
GradientCheckReport gradient_check(const ExperimentConfig& config, double tolerance,
                                   const GradientCheckOptions& options = {});

}  // namespace dmr
