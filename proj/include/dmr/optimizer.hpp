#pragma once

#include <cstdint>

#include "dmr/config.hpp"
#include "dmr/model.hpp"

namespace dmr {

// SGD with heavy-ball momentum and L2 weight decay:
//   v <- momentum * v + (g + weight_decay * theta);  theta <- theta - lr * v
struct OptimizerState {
  ModelParameters velocity;  // same layout as the parameters; buffers unused
  std::uint64_t step = 0;
};

OptimizerState make_optimizer_state(const ModelParameters& params);

double learning_rate_at(const OptimizerConfig& config, int epoch);

void sgd_step(ModelParameters& params, const ModelParameters& grads, OptimizerState& state,
              const OptimizerConfig& config, double learning_rate);

}  // namespace dmr
