#include "dmr/optimizer.hpp"

#include "dmr/errors.hpp"

namespace dmr {

OptimizerState make_optimizer_state(const ModelParameters& params) {
  return OptimizerState{zeros_like(params), 0};
}

double learning_rate_at(const OptimizerConfig& config, int epoch) {
  double lr = config.learning_rate;
  if (config.warmup_epochs > 0 && epoch < config.warmup_epochs)
    lr *= static_cast<double>(epoch + 1) / static_cast<double>(config.warmup_epochs);
  for (int milestone : config.milestones)
    if (epoch >= milestone) lr *= config.decay;
  return lr;
}

void sgd_step(ModelParameters& params, const ModelParameters& grads, OptimizerState& state,
              const OptimizerConfig& config, double learning_rate) {
  auto p = parameter_views(params);
  const auto g = parameter_views(grads);
  auto v = parameter_views(state.velocity);
  if (p.size() != g.size() || p.size() != v.size()) throw InvalidInput("gradient layout mismatch");
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (p[t].size() != g[t].size() || p[t].size() != v[t].size())
      throw InvalidInput("gradient shape mismatch for " + p[t].name);
    for (std::size_t i = 0; i < p[t].size(); ++i) {
      v[t].data[i] = config.momentum * v[t].data[i] + (g[t].data[i] + config.weight_decay * p[t].data[i]);
      p[t].data[i] -= learning_rate * v[t].data[i];
    }
  }
  ++state.step;
}

}  // namespace dmr
