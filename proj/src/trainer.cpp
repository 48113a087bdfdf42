#include "dmr/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "dmr/errors.hpp"
#include "json.hpp"

namespace dmr {

namespace {

Eigen::MatrixXd draw_noise(RandomSource& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd eps(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) eps(i, j) = rng.normal();
  return eps;
}

nlohmann::json hard_to_json(const std::optional<HardSet>& h) {
  if (!h) return nullptr;
  return h->indices;
}

}  // namespace

TrainingState initial_state(const ExperimentConfig& config) {
  config.validate();
  RandomSource init(config.seed, Stream::init);
  auto params = init_parameters(config.model_config(), init);
  auto opt = make_optimizer_state(params);
  return TrainingState{std::move(params),
                       std::move(opt),
                       RandomSource(config.seed, Stream::masks),
                       RandomSource(config.seed, Stream::noise),
                       RandomSource(config.seed, Stream::shuffle),
                       0,
                       std::nullopt};
}

TrainResult resume(const ExperimentConfig& config, const SplitDataset& data, TrainingState state,
                   const TrainOptions& options) {
  config.validate();
  const auto model = config.model_config();
  check_compatible(state.params, model);
  if (data.train.empty()) throw InvalidInput("empty training set");

  const auto started = std::chrono::steady_clock::now();
  TrainResult result;
  result.record.config_hash = config_hash(config);
  result.record.seed = config.seed;

  const auto C = static_cast<Eigen::Index>(model.channels);
  const auto S = static_cast<Eigen::Index>(model.positions);
  const std::size_t N = data.train.size();
  const double alpha = config.effective_alpha();
  const double beta = config.effective_beta();
  const int last_epoch = options.stop_after_epoch ? std::min(*options.stop_after_epoch, config.epochs) : config.epochs;

  CombinationStats stats(model.modalities());
  std::vector<std::size_t> order(N);

  for (int epoch = state.next_epoch; epoch < last_epoch; ++epoch) {
    const double lr = learning_rate_at(config.optimizer, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), state.shuffle_rng.engine());

    for (std::size_t start = 0; start < N; start += config.batch_size) {
      const std::size_t end = std::min(N, start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const auto inputs = data.train.gather(idx);
      const auto labels = data.train.labels(idx);
      std::vector<CombinationMask> masks;
      masks.reserve(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) masks.push_back(sample_dropout_mask(config.dropout, state.mask_rng));

      const auto B = static_cast<Eigen::Index>(idx.size());
      std::optional<Eigen::MatrixXd> eps;
      if (config.samples_embedding()) {
        eps = config.disable_sampling_noise ? Eigen::MatrixXd::Zero(C, B * S)
                                            : draw_noise(state.noise_rng, C, B * S);
      }
      const auto pass = forward_batch(state.params, model, inputs, masks, eps ? &*eps : nullptr,
                                      Normalization::batch_statistics);
      const std::optional<HardSet> hard = config.uses_hard_set() ? state.hard : std::nullopt;
      const auto loss = total_loss(pass, labels, hard, alpha, beta);

      StepRecord rec;
      rec.step = state.optimizer.step;
      rec.epoch = epoch;
      rec.loss = loss.breakdown;
      rec.mean_variance = pass.sigma.array().square().mean();
      rec.hard = hard;
      if (!std::isfinite(rec.loss.total)) {
        throw DivergenceError(rec.step, epoch,
                              "non-finite loss at step " + std::to_string(rec.step) + " (epoch " +
                                  std::to_string(epoch) + ")");
      }

      const auto grads = backward_batch(state.params, model, pass, loss.gradients);
      sgd_step(state.params, grads, state.optimizer, config.optimizer, lr);
      update_running_statistics(state.params, pass, model.norm_momentum);
      update_stats(stats, pass, model.positions);

      if (options.on_step) options.on_step(rec);
      result.record.steps.push_back(std::move(rec));
    }

    EpochRecord er;
    er.epoch = epoch;
    er.learning_rate = lr;
    er.variances = combination_variances(stats);
    er.mean_variance = stats.total_count() ? stats.total_sum() / static_cast<double>(stats.total_count()) : 0.0;
    for (const auto& e : stats.entries()) er.counts.push_back(e.count);
    state.hard = refresh_schedule(epoch + 1, config.hcr_warmup, stats, state.hard);
    er.hard_for_next = state.hard;

    state.next_epoch = epoch + 1;
    state.mask_rng.discard_cache();
    state.noise_rng.discard_cache();
    state.shuffle_rng.discard_cache();

    if (options.on_epoch) options.on_epoch(er);
    result.record.epochs.push_back(std::move(er));
  }

  if (options.evaluate && state.next_epoch >= config.epochs)
    result.record.results = evaluate(config, state.params, data.test, config.metric);

  result.record.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  result.state = std::move(state);
  return result;
}

TrainResult train(const ExperimentConfig& config, const SplitDataset& data, const TrainOptions& options) {
  return resume(config, data, initial_state(config), options);
}

TrainResult train(const ExperimentConfig& config, const TrainOptions& options) {
  config.validate();
  return train(config, experiment_data(config), options);
}

double final_mean_variance(const RunRecord& record) {
  if (record.epochs.empty()) throw InvalidInput("run has no completed epochs");
  return record.epochs.back().mean_variance;
}

CombinationResultTable evaluate(const ExperimentConfig& config, const ModelParameters& params,
                                const Dataset& dataset, MetricKind kind) {
  const auto model = config.model_config();
  check_compatible(params, model);
  return per_combination_eval(params, model, dataset, kind);
}

void write_step_jsonl(std::ostream& out, const std::string& config_hash, const StepRecord& s) {
  nlohmann::json j{{"config_hash", config_hash},      {"step", s.step},           {"epoch", s.epoch},
                   {"l_ttl", s.loss.l_ttl},           {"l_dr", s.loss.l_dr},      {"l_hcr", s.loss.l_hcr},
                   {"total", s.loss.total},           {"alpha", s.loss.alpha},    {"beta", s.loss.beta},
                   {"mean_sigma2", s.mean_variance},  {"hard_set", hard_to_json(s.hard)}};
  out << j.dump() << '\n';
}

void write_mining_csv_header(std::ostream& out) { out << "epoch,index,bits,d_j,elements,in_hard_set\n"; }

void write_mining_csv_rows(std::ostream& out, const EpochRecord& e, std::size_t modalities) {
  char buf[64];
  for (CombinationIndex j = 1; j <= combination_count(modalities); ++j) {
    const auto it = e.variances.find(j);
    const bool in_h = e.hard_for_next && e.hard_for_next->contains(j);
    out << e.epoch << ',' << j << ',' << CombinationMask::from_index(j, modalities).bitstring() << ',';
    if (it != e.variances.end()) {
      std::snprintf(buf, sizeof buf, "%.12g", it->second);
      out << buf;
    }
    out << ',' << (j < e.counts.size() ? e.counts[j] : 0) << ',' << (in_h ? 1 : 0) << '\n';
  }
}

}  // namespace dmr
