#include "dmr/config.hpp"

#include <cmath>
#include <set>

#include "dmr/digest.hpp"
#include "dmr/errors.hpp"

namespace dmr {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + where + key + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + where + key + "': " + e.what());
  }
}

json dropout_to_json(const DropoutPolicy& p) {
  return json{{"kind", p.kind_name()},
              {"keep_probability", p.keep_probability()},
              {"mask", p.kind() == DropoutPolicy::Kind::fixed ? p.fixed_mask().bitstring() : ""}};
}

DropoutPolicy dropout_from_json(const json& j, const DropoutPolicy& defaults, std::size_t modalities) {
  reject_unknown(j, {"kind", "keep_probability", "mask"}, "dropout.");
  std::string kind = defaults.kind_name();
  double p = defaults.keep_probability();
  std::string mask = defaults.kind() == DropoutPolicy::Kind::fixed ? defaults.fixed_mask().bitstring() : "";
  read(j, "kind", kind, "dropout.");
  read(j, "keep_probability", p, "dropout.");
  read(j, "mask", mask, "dropout.");
  try {
    if (kind == "uniform-nonempty") return DropoutPolicy::uniform_nonempty(modalities);
    if (kind == "per-modality-bernoulli") return DropoutPolicy::bernoulli(modalities, p);
    if (kind == "fixed") return DropoutPolicy::fixed(CombinationMask::from_bitstring(mask));
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("dropout: ") + e.what());
  }
  throw ConfigError("unknown dropout kind '" + kind + "'");
}

}  // namespace

std::string to_string(TrainingMode m) {
  switch (m) {
    case TrainingMode::vanilla: return "vanilla";
    case TrainingMode::dmr: return "dmr";
    case TrainingMode::dmr_hcr: return "dmr+hcr";
  }
  return "unknown";
}

TrainingMode training_mode_from_string(const std::string& name) {
  if (name == "vanilla") return TrainingMode::vanilla;
  if (name == "dmr") return TrainingMode::dmr;
  if (name == "dmr+hcr") return TrainingMode::dmr_hcr;
  throw ConfigError("unknown mode '" + name + "' (expected vanilla, dmr or dmr+hcr)");
}

double ExperimentConfig::effective_alpha() const { return mode == TrainingMode::vanilla ? 0.0 : alpha; }

double ExperimentConfig::effective_beta() const { return mode == TrainingMode::dmr_hcr ? beta : 0.0; }

ModelConfig ExperimentConfig::model_config() const {
  ModelConfig m = model;
  m.input_dims = unimodal ? std::vector<std::size_t>{data.input_dims.at(unimodal - 1)} : data.input_dims;
  m.classes = data.classes;
  return m;
}

void ExperimentConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a finite value >= 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be a finite value >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (hcr_warmup < 0) throw ConfigError("hcr_warmup must be >= 0");
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("optimizer.learning_rate must be positive");
  if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0))
    throw ConfigError("optimizer.momentum must lie in [0, 1)");
  if (!(optimizer.weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay must be >= 0");
  if (optimizer.warmup_epochs < 0) throw ConfigError("optimizer.warmup_epochs must be >= 0");
  if (!(optimizer.decay > 0.0)) throw ConfigError("optimizer.decay must be positive");
  if (unimodal > data.modalities())
    throw ConfigError("unimodal selects modality " + std::to_string(unimodal) + " of " +
                      std::to_string(data.modalities()));
  if (dropout.modalities() != modalities())
    throw ConfigError("dropout policy covers " + std::to_string(dropout.modalities()) +
                      " modalities, model has " + std::to_string(modalities()));
  try {
    data.validate();
    model_config().validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig standard_config() {
  ExperimentConfig c;
  c.data = SyntheticSpec{};
  c.dropout = DropoutPolicy::uniform_nonempty(c.data.modalities());
  return c;
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.data.classes = 3;
  c.data.input_dims = {3, 3};
  c.data.snr = {1.0, 1.0};
  c.data.shared_dim = 2;
  c.data.specific_dim = 2;
  c.data.train_size = 6;
  c.data.test_size = 6;
  c.model.hidden = 4;
  c.model.channels = 3;
  c.model.positions = 2;
  c.dropout = DropoutPolicy::uniform_nonempty(2);
  c.epochs = 1;
  c.batch_size = 6;
  c.hcr_warmup = 0;
  return c;
}

json synthetic_spec_to_json(const SyntheticSpec& s) {
  return json{{"classes", s.classes},         {"input_dims", s.input_dims}, {"snr", s.snr},
              {"shared_dim", s.shared_dim},   {"specific_dim", s.specific_dim},
              {"train_size", s.train_size},   {"test_size", s.test_size},   {"seed", s.seed}};
}

SyntheticSpec synthetic_spec_from_json(const json& j, const SyntheticSpec& defaults) {
  reject_unknown(j, {"classes", "input_dims", "snr", "shared_dim", "specific_dim", "train_size", "test_size", "seed"},
                 "data.");
  SyntheticSpec s = defaults;
  read(j, "classes", s.classes, "data.");
  read(j, "input_dims", s.input_dims, "data.");
  read(j, "snr", s.snr, "data.");
  read(j, "shared_dim", s.shared_dim, "data.");
  read(j, "specific_dim", s.specific_dim, "data.");
  read(j, "train_size", s.train_size, "data.");
  read(j, "test_size", s.test_size, "data.");
  read(j, "seed", s.seed, "data.");
  return s;
}

json config_to_json(const ExperimentConfig& c) {
  json model{{"hidden", c.model.hidden},
             {"channels", c.model.channels},
             {"positions", c.model.positions},
             {"activation", to_string(c.model.activation)},
             {"norm_epsilon", c.model.norm_epsilon},
             {"norm_momentum", c.model.norm_momentum},
             {"sigma_gain_init", c.model.sigma_gain_init}};
  json optimizer{{"learning_rate", c.optimizer.learning_rate}, {"momentum", c.optimizer.momentum},
                 {"weight_decay", c.optimizer.weight_decay},   {"warmup_epochs", c.optimizer.warmup_epochs},
                 {"milestones", c.optimizer.milestones},       {"decay", c.optimizer.decay}};
  return json{{"mode", to_string(c.mode)},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"hcr_warmup", c.hcr_warmup},
              {"seed", c.seed},
              {"disable_sampling_noise", c.disable_sampling_noise},
              {"unimodal", c.unimodal},
              {"metric", to_string(c.metric)},
              {"data", synthetic_spec_to_json(c.data)},
              {"model", model},
              {"dropout", dropout_to_json(c.dropout)},
              {"optimizer", optimizer}};
}

ExperimentConfig config_from_json(const json& j, const ExperimentConfig& defaults) {
  reject_unknown(j,
                 {"mode", "alpha", "beta", "epochs", "batch_size", "hcr_warmup", "seed", "disable_sampling_noise", "unimodal",
                  "metric", "data", "model", "dropout", "optimizer"},
                 "");
  ExperimentConfig c = defaults;
  std::string mode = to_string(c.mode), metric = to_string(c.metric);
  read(j, "mode", mode, "");
  c.mode = training_mode_from_string(mode);
  read(j, "alpha", c.alpha, "");
  read(j, "beta", c.beta, "");
  read(j, "epochs", c.epochs, "");
  read(j, "batch_size", c.batch_size, "");
  read(j, "hcr_warmup", c.hcr_warmup, "");
  read(j, "seed", c.seed, "");
  read(j, "disable_sampling_noise", c.disable_sampling_noise, "");
  read(j, "unimodal", c.unimodal, "");
  read(j, "metric", metric, "");
  try {
    c.metric = metric_kind_from_string(metric);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  if (j.contains("data")) c.data = synthetic_spec_from_json(j.at("data"), c.data);
  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown(m, {"hidden", "channels", "positions", "activation", "norm_epsilon", "norm_momentum", "sigma_gain_init"},
                   "model.");
    read(m, "hidden", c.model.hidden, "model.");
    read(m, "channels", c.model.channels, "model.");
    read(m, "positions", c.model.positions, "model.");
    std::string act = to_string(c.model.activation);
    read(m, "activation", act, "model.");
    try {
      c.model.activation = activation_from_string(act);
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
    read(m, "norm_epsilon", c.model.norm_epsilon, "model.");
    read(m, "norm_momentum", c.model.norm_momentum, "model.");
    read(m, "sigma_gain_init", c.model.sigma_gain_init, "model.");
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    reject_unknown(o, {"learning_rate", "momentum", "weight_decay", "warmup_epochs", "milestones", "decay"},
                   "optimizer.");
    read(o, "learning_rate", c.optimizer.learning_rate, "optimizer.");
    read(o, "momentum", c.optimizer.momentum, "optimizer.");
    read(o, "weight_decay", c.optimizer.weight_decay, "optimizer.");
    read(o, "warmup_epochs", c.optimizer.warmup_epochs, "optimizer.");
    read(o, "milestones", c.optimizer.milestones, "optimizer.");
    read(o, "decay", c.optimizer.decay, "optimizer.");
  }
  // The dropout policy is sized by the (possibly overridden) modality count.
  const bool resize_default = !j.contains("dropout") && c.dropout.modalities() != c.modalities() &&
                              c.dropout.kind() != DropoutPolicy::Kind::fixed;
  if (j.contains("dropout"))
    c.dropout = dropout_from_json(j.at("dropout"), c.dropout, c.modalities());
  else if (resize_default)
    c.dropout = dropout_from_json(json::object(), c.dropout, c.modalities());
  c.validate();
  return c;
}

SplitDataset experiment_data(const ExperimentConfig& config) {
  auto data = generate_dataset(config.data);
  if (config.unimodal == 0) return data;
  return SplitDataset{select_modality(data.train, config.unimodal), select_modality(data.test, config.unimodal)};
}

std::string config_hash(const ExperimentConfig& config) {
  const auto digest = sha256(config_to_json(config).dump());
  return to_hex(digest);
}

}  // namespace dmr
