#include "dmr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "dmr/datasynth.hpp"
#include "dmr/errors.hpp"
#include "dmr/losses.hpp"
#include "dmr/mining.hpp"
#include "dmr/trainer.hpp"

namespace dmr {

GradientCheckReport gradient_check(const ExperimentConfig& config, double tolerance,
                                   const GradientCheckOptions& options) {
  config.validate();
  const auto model = config.model_config();
  auto state = initial_state(config);
  if (options.prepare) options.prepare(state.params);
  if (parameter_count(state.params) > kGradientCheckMaxParameters)
    throw InvalidInput("gradient check needs at most " + std::to_string(kGradientCheckMaxParameters) +
                       " parameters, model has " + std::to_string(parameter_count(state.params)));

  const auto data = experiment_data(config);
  const auto inputs = data.train.gather_all();
  const auto labels = data.train.labels();
  const std::size_t B = data.train.size();

  std::vector<CombinationMask> masks;
  for (std::size_t i = 0; i < B; ++i) masks.push_back(sample_dropout_mask(config.dropout, state.mask_rng));

  const auto C = static_cast<Eigen::Index>(model.channels);
  const auto S = static_cast<Eigen::Index>(model.positions);
  std::optional<Eigen::MatrixXd> eps;
  if (config.samples_embedding()) {
    eps = Eigen::MatrixXd::Zero(C, static_cast<Eigen::Index>(B) * S);
    if (!config.disable_sampling_noise)
      for (Eigen::Index j = 0; j < eps->cols(); ++j)
        for (Eigen::Index i = 0; i < eps->rows(); ++i) (*eps)(i, j) = state.noise_rng.normal();
  }
  const Eigen::MatrixXd* eps_ptr = eps ? &*eps : nullptr;

  std::optional<HardSet> hard;
  if (config.uses_hard_set()) {
    const auto pass = forward_batch(state.params, model, inputs, masks, eps_ptr, Normalization::batch_statistics);
    CombinationStats stats(model.modalities());
    update_stats(stats, pass, model.positions);
    const auto d = combination_variances(stats);
    if (d.size() >= model.modalities()) {
      hard = select_hard_set(d, model.modalities());
    } else {
      HardSet h;
      for (CombinationIndex j = 1; j <= model.modalities(); ++j) h.indices.push_back(j);
      hard = h;
    }
  }

  const double alpha = config.effective_alpha(), beta = config.effective_beta();
  auto objective = [&](const ModelParameters& p) {
    const auto pass = forward_batch(p, model, inputs, masks, eps_ptr, Normalization::batch_statistics);
    return total_loss(pass, labels, hard, alpha, beta).breakdown.total;
  };

  const auto pass = forward_batch(state.params, model, inputs, masks, eps_ptr, Normalization::batch_statistics);
  const auto loss = total_loss(pass, labels, hard, alpha, beta);
  auto analytic = backward_batch(state.params, model, pass, loss.gradients);
  if (options.corrupt) options.corrupt(analytic);

  std::map<std::string, GradientGroupReport> by_group;
  std::vector<std::string> order;
  std::map<std::string, double> max_diff, max_scale;

  auto probe = state.params;
  auto views = parameter_views(probe);
  const auto grads = parameter_views(static_cast<const ModelParameters&>(analytic));
  for (std::size_t t = 0; t < views.size(); ++t) {
    const auto& group = views[t].group;
    if (!by_group.count(group)) {
      order.push_back(group);
      by_group[group].group = group;
    }
    auto& rep = by_group[group];
    for (std::size_t i = 0; i < views[t].size(); ++i) {
      const double saved = views[t].data[i];
      views[t].data[i] = saved + options.step;
      const double up = objective(probe);
      views[t].data[i] = saved - options.step;
      const double down = objective(probe);
      views[t].data[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = grads[t].data[i];
      ++rep.parameters;
      rep.max_abs_gradient = std::max({rep.max_abs_gradient, std::abs(a), std::abs(numeric)});
      max_diff[group] = std::max(max_diff[group], std::abs(a - numeric));
    }
  }

  GradientCheckReport report;
  report.tolerance = tolerance;
  report.passed = true;
  for (const auto& g : order) {
    auto rep = by_group[g];
    rep.max_relative_error = rep.max_abs_gradient > 0.0 ? max_diff[g] / rep.max_abs_gradient : max_diff[g];
    report.passed = report.passed && rep.max_relative_error < tolerance;
    report.groups.push_back(rep);
  }
  return report;
}

}  // namespace dmr
