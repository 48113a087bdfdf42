#include "dmr/model.hpp"

#include <cmath>

#include "dmr/errors.hpp"

namespace dmr {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd activate(Activation a, const MatrixXd& pre) {
  switch (a) {
    case Activation::identity: return pre;
    case Activation::tanh: return pre.array().tanh().matrix();
    case Activation::relu: return pre.cwiseMax(0.0);
  }
  return pre;
}

// d(out)/d(pre) applied elementwise to upstream.
MatrixXd activation_backward(Activation a, const MatrixXd& pre, const MatrixXd& out,
                             const MatrixXd& upstream) {
  switch (a) {
    case Activation::identity: return upstream;
    case Activation::tanh: return (upstream.array() * (1.0 - out.array().square())).matrix();
    case Activation::relu: return (upstream.array() * (pre.array() > 0.0).cast<double>()).matrix();
  }
  return upstream;
}

// R (C*S x B) -> C x (B*S) with F(c, b*S+s) = R(c*S+s, b).
MatrixXd fold_features(const MatrixXd& flat, std::size_t channels, std::size_t positions) {
  const Index B = flat.cols();
  const Index C = static_cast<Index>(channels), S = static_cast<Index>(positions);
  MatrixXd out(C, B * S);
  for (Index b = 0; b < B; ++b)
    for (Index c = 0; c < C; ++c)
      for (Index s = 0; s < S; ++s) out(c, b * S + s) = flat(c * S + s, b);
  return out;
}

MatrixXd unfold_features(const MatrixXd& maps, std::size_t channels, std::size_t positions) {
  const Index C = static_cast<Index>(channels), S = static_cast<Index>(positions);
  const Index B = maps.cols() / S;
  MatrixXd flat(C * S, B);
  for (Index b = 0; b < B; ++b)
    for (Index c = 0; c < C; ++c)
      for (Index s = 0; s < S; ++s) flat(c * S + s, b) = maps(c, b * S + s);
  return flat;
}

HeadPass head_forward(const DistributionHead& head, const MatrixXd& z, Normalization norm,
                      double epsilon) {
  HeadPass pass;
  pass.pre = head.weight * z;
  const double n = static_cast<double>(z.cols());
  if (norm == Normalization::batch_statistics) {
    pass.mean = pass.pre.rowwise().sum() / n;
    pass.var = (pass.pre.colwise() - pass.mean).array().square().rowwise().sum().matrix() / n;
  } else {
    pass.mean = head.running_mean;
    pass.var = head.running_var;
  }
  pass.inv_std = (pass.var.array() + epsilon).rsqrt().matrix();
  pass.normalized = ((pass.pre.colwise() - pass.mean).array().colwise() * pass.inv_std.array()).matrix();
  return pass;
}

MatrixXd head_output(const DistributionHead& head, const HeadPass& pass) {
  return ((pass.normalized.array().colwise() * head.gamma.array()).colwise() + head.beta.array())
      .matrix();
}

// Returns dL/dz and accumulates head gradients.
MatrixXd head_backward(const DistributionHead& head, const HeadPass& pass, const MatrixXd& z,
                       const MatrixXd& upstream, Normalization norm, DistributionHead& grad) {
  grad.gamma = (upstream.array() * pass.normalized.array()).rowwise().sum().matrix();
  grad.beta = upstream.rowwise().sum();
  const MatrixXd dnorm = (upstream.array().colwise() * head.gamma.array()).matrix();
  MatrixXd dpre;
  if (norm == Normalization::batch_statistics) {
    const double n = static_cast<double>(z.cols());
    const VectorXd sum_d = dnorm.rowwise().sum();
    const VectorXd sum_dx = (dnorm.array() * pass.normalized.array()).rowwise().sum().matrix();
    dpre = MatrixXd(dnorm.rows(), dnorm.cols());
    for (Index c = 0; c < dnorm.rows(); ++c) {
      dpre.row(c) = (pass.inv_std(c) / n) *
                    (n * dnorm.row(c).array() - sum_d(c) - pass.normalized.row(c).array() * sum_dx(c))
                        .matrix();
    }
  } else {
    dpre = (dnorm.array().colwise() * pass.inv_std.array()).matrix();
  }
  grad.weight = dpre * z.transpose();
  return head.weight.transpose() * dpre;
}

void check_inputs(const ModelConfig& config, std::span<const MatrixXd> inputs,
                  std::span<const CombinationMask> masks) {
  if (inputs.size() != config.modalities())
    throw InvalidInput("expected " + std::to_string(config.modalities()) + " modality inputs, got " +
                       std::to_string(inputs.size()));
  const Index B = inputs.empty() ? 0 : inputs[0].cols();
  if (B == 0) throw InvalidInput("empty batch");
  for (std::size_t v = 0; v < inputs.size(); ++v) {
    if (inputs[v].rows() != static_cast<Index>(config.input_dims[v]))
      throw InvalidInput("modality " + std::to_string(v + 1) + " input has dimension " +
                         std::to_string(inputs[v].rows()) + ", expected " +
                         std::to_string(config.input_dims[v]));
    if (inputs[v].cols() != B) throw InvalidInput("modality inputs disagree on batch size");
    if (!inputs[v].allFinite()) throw InvalidInput("non-finite input values");
  }
  if (masks.size() != static_cast<std::size_t>(B))
    throw InvalidInput("need one combination mask per sample");
  for (const auto& m : masks) {
    if (m.size() != config.modalities()) throw InvalidInput("mask length does not match V");
  }
}

template <class Params, class View>
std::vector<View> collect_parameters(Params& p) {
  std::vector<View> out;
  auto add = [&out](std::string name, std::string group, auto& tensor) {
    out.push_back(View{std::move(name), std::move(group), tensor.data(), tensor.rows(), tensor.cols()});
  };
  for (std::size_t v = 0; v < p.encoders.size(); ++v) {
    const std::string group = "encoder" + std::to_string(v + 1);
    for (std::size_t l = 0; l < p.encoders[v].layers.size(); ++l) {
      const std::string prefix = group + ".layer" + std::to_string(l + 1);
      add(prefix + ".weight", group, p.encoders[v].layers[l].weight);
      add(prefix + ".bias", group, p.encoders[v].layers[l].bias);
    }
  }
  add("fusion.weight", "fusion", p.fusion.weight);
  add("fusion.bias", "fusion", p.fusion.bias);
  add("mu_head.weight", "mu_head", p.mu_head.weight);
  add("mu_head.gamma", "mu_head", p.mu_head.gamma);
  add("mu_head.beta", "mu_head", p.mu_head.beta);
  add("sigma_head.weight", "sigma_head", p.sigma_head.weight);
  add("sigma_head.gamma", "sigma_head", p.sigma_head.gamma);
  add("sigma_head.beta", "sigma_head", p.sigma_head.beta);
  add("classifier.weight", "classifier", p.classifier);
  return out;
}

template <class Params, class View>
std::vector<View> collect_buffers(Params& p) {
  std::vector<View> out;
  auto add = [&out](std::string name, std::string group, auto& tensor) {
    out.push_back(View{std::move(name), std::move(group), tensor.data(), tensor.rows(), tensor.cols()});
  };
  add("mu_head.running_mean", "mu_head", p.mu_head.running_mean);
  add("mu_head.running_var", "mu_head", p.mu_head.running_var);
  add("sigma_head.running_mean", "sigma_head", p.sigma_head.running_mean);
  add("sigma_head.running_var", "sigma_head", p.sigma_head.running_var);
  return out;
}

MatrixXd random_matrix(Index rows, Index cols, double stddev, RandomSource& rng) {
  MatrixXd m(rows, cols);
  // Column-major fill order is part of the determinism contract.
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = stddev * rng.normal();
  return m;
}

DistributionHead make_head(std::size_t channels, double gain, RandomSource& rng) {
  const auto C = static_cast<Index>(channels);
  DistributionHead h;
  h.weight = random_matrix(C, C, 1.0 / std::sqrt(static_cast<double>(C)), rng);
  h.gamma = VectorXd::Constant(C, gain);
  h.beta = VectorXd::Zero(C);
  h.running_mean = VectorXd::Zero(C);
  h.running_var = VectorXd::Ones(C);
  return h;
}

void expect_shape(const MatrixXd& m, Index rows, Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols)
    throw IncompatibleCheckpoint(what + " has shape " + std::to_string(m.rows()) + "x" +
                                 std::to_string(m.cols()) + ", expected " + std::to_string(rows) +
                                 "x" + std::to_string(cols));
}

void expect_shape(const VectorXd& v, Index rows, const std::string& what) {
  if (v.rows() != rows)
    throw IncompatibleCheckpoint(what + " has length " + std::to_string(v.rows()) + ", expected " +
                                 std::to_string(rows));
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw InvalidInput("unknown activation '" + name + "'");
}

void ModelConfig::validate() const {
  if (input_dims.empty()) throw InvalidInput("model needs at least one modality");
  if (input_dims.size() > kMaxModalities) throw InvalidInput("too many modalities");
  for (auto d : input_dims)
    if (d < 1) throw InvalidInput("modality input dimension must be at least 1");
  if (channels < 1 || positions < 1 || classes < 2)
    throw InvalidInput("channels and positions must be >= 1 and classes >= 2");
  if (!(norm_epsilon > 0.0)) throw InvalidInput("normalization epsilon must be positive");
  if (!(norm_momentum >= 0.0 && norm_momentum <= 1.0))
    throw InvalidInput("normalization momentum must lie in [0, 1]");
  if (!std::isfinite(sigma_gain_init)) throw InvalidInput("sigma gain must be finite");
}

std::vector<ParameterView> parameter_views(ModelParameters& params) {
  return collect_parameters<ModelParameters, ParameterView>(params);
}
std::vector<ConstParameterView> parameter_views(const ModelParameters& params) {
  return collect_parameters<const ModelParameters, ConstParameterView>(params);
}
std::vector<ParameterView> buffer_views(ModelParameters& params) {
  return collect_buffers<ModelParameters, ParameterView>(params);
}
std::vector<ConstParameterView> buffer_views(const ModelParameters& params) {
  return collect_buffers<const ModelParameters, ConstParameterView>(params);
}

std::size_t parameter_count(const ModelParameters& params) {
  std::size_t n = 0;
  for (const auto& v : parameter_views(params)) n += v.size();
  return n;
}

ModelParameters init_parameters(const ModelConfig& config, RandomSource& rng) {
  config.validate();
  const auto C = static_cast<Index>(config.channels);
  const auto F = static_cast<Index>(config.feature_size());
  const auto V = static_cast<Index>(config.modalities());
  ModelParameters p;
  for (std::size_t v = 0; v < config.modalities(); ++v) {
    EncoderParams enc;
    const auto in = static_cast<Index>(config.input_dims[v]);
    if (config.hidden == 0) {
      enc.layers.push_back({random_matrix(F, in, 1.0 / std::sqrt(double(in)), rng), VectorXd::Zero(F)});
    } else {
      const auto H = static_cast<Index>(config.hidden);
      enc.layers.push_back({random_matrix(H, in, 1.0 / std::sqrt(double(in)), rng), VectorXd::Zero(H)});
      enc.layers.push_back({random_matrix(F, H, 1.0 / std::sqrt(double(H)), rng), VectorXd::Zero(F)});
    }
    p.encoders.push_back(std::move(enc));
  }
  p.fusion.weight = random_matrix(C, V * C, 1.0 / std::sqrt(double(V * C)), rng);
  p.fusion.bias = VectorXd::Zero(C);
  p.mu_head = make_head(config.channels, 1.0, rng);
  p.sigma_head = make_head(config.channels, config.sigma_gain_init, rng);
  p.classifier = random_matrix(static_cast<Index>(config.classes), C, 1.0 / std::sqrt(double(C)), rng);
  return p;
}

ModelParameters zeros_like(const ModelParameters& params) {
  ModelParameters z = params;
  for (auto& view : parameter_views(z)) std::fill(view.data, view.data + view.size(), 0.0);
  for (auto& view : buffer_views(z)) std::fill(view.data, view.data + view.size(), 0.0);
  return z;
}

void check_compatible(const ModelParameters& p, const ModelConfig& config) {
  config.validate();
  const auto C = static_cast<Index>(config.channels);
  const auto F = static_cast<Index>(config.feature_size());
  const auto V = config.modalities();
  if (p.encoders.size() != V)
    throw IncompatibleCheckpoint("checkpoint has " + std::to_string(p.encoders.size()) +
                                 " encoders, config expects " + std::to_string(V));
  for (std::size_t v = 0; v < V; ++v) {
    const auto& layers = p.encoders[v].layers;
    const auto in = static_cast<Index>(config.input_dims[v]);
    const std::string name = "encoder" + std::to_string(v + 1);
    if (layers.size() != (config.hidden == 0 ? 1u : 2u))
      throw IncompatibleCheckpoint(name + " has the wrong number of layers");
    if (config.hidden == 0) {
      expect_shape(layers[0].weight, F, in, name + ".layer1.weight");
      expect_shape(layers[0].bias, F, name + ".layer1.bias");
    } else {
      const auto H = static_cast<Index>(config.hidden);
      expect_shape(layers[0].weight, H, in, name + ".layer1.weight");
      expect_shape(layers[0].bias, H, name + ".layer1.bias");
      expect_shape(layers[1].weight, F, H, name + ".layer2.weight");
      expect_shape(layers[1].bias, F, name + ".layer2.bias");
    }
  }
  expect_shape(p.fusion.weight, C, static_cast<Index>(V) * C, "fusion.weight");
  expect_shape(p.fusion.bias, C, "fusion.bias");
  for (const auto* head : {&p.mu_head, &p.sigma_head}) {
    expect_shape(head->weight, C, C, "head.weight");
    expect_shape(head->gamma, C, "head.gamma");
    expect_shape(head->beta, C, "head.beta");
    expect_shape(head->running_mean, C, "head.running_mean");
    expect_shape(head->running_var, C, "head.running_var");
  }
  expect_shape(p.classifier, static_cast<Index>(config.classes), C, "classifier.weight");
}

// ---------------------------------------------------------------------------
// Single-sample operations

FeatureMap encode_modality(const EncoderParams& encoder, const ModelConfig& config,
                           const VectorXd& input) {
  if (encoder.layers.empty()) throw InvalidInput("encoder has no layers");
  if (input.size() != encoder.layers.front().weight.cols())
    throw InvalidInput("modality input has dimension " + std::to_string(input.size()) +
                       ", encoder expects " + std::to_string(encoder.layers.front().weight.cols()));
  MatrixXd h = input;
  for (const auto& layer : encoder.layers) h = activate(config.activation, (layer.weight * h).colwise() + layer.bias);
  if (h.rows() != static_cast<Index>(config.feature_size()))
    throw InvalidInput("encoder output does not match C x S");
  return fold_features(h, config.channels, config.positions);
}

FeatureMap fuse(const AffineLayer& fusion, std::span<const FeatureMap> masked_features) {
  if (masked_features.empty()) throw InvalidInput("fusion needs at least one modality map");
  const Index C = masked_features[0].rows(), S = masked_features[0].cols();
  for (const auto& f : masked_features)
    if (f.rows() != C || f.cols() != S) throw InvalidInput("modality maps have inconsistent shapes");
  const Index V = static_cast<Index>(masked_features.size());
  if (fusion.weight.cols() != V * C || fusion.bias.size() != fusion.weight.rows())
    throw InvalidInput("fusion weights do not match V x C input channels");
  MatrixXd stacked(V * C, S);
  for (Index v = 0; v < V; ++v) stacked.middleRows(v * C, C) = masked_features[v];
  return (fusion.weight * stacked).colwise() + fusion.bias;
}

GaussianEmbedding estimate_distribution(const DistributionHead& mu_head,
                                        const DistributionHead& sigma_head, const FeatureMap& z,
                                        double norm_epsilon) {
  if (!z.allFinite()) throw InvalidInput("non-finite fused map");
  if (mu_head.weight.cols() != z.rows() || sigma_head.weight.cols() != z.rows())
    throw InvalidInput("distribution heads do not match the fused channel count");
  GaussianEmbedding g;
  g.mu = head_output(mu_head, head_forward(mu_head, z, Normalization::running_statistics, norm_epsilon));
  g.log_sigma = head_output(sigma_head, head_forward(sigma_head, z, Normalization::running_statistics,
                                                     norm_epsilon))
                    .cwiseMax(kLogSigmaMin)
                    .cwiseMin(kLogSigmaMax);
  return g;
}

FeatureMap reparameterize(const GaussianEmbedding& g, const FeatureMap& eps) {
  if (g.mu.rows() != g.log_sigma.rows() || g.mu.cols() != g.log_sigma.cols())
    throw InvalidInput("mu and log-sigma shapes differ");
  if (eps.rows() != g.mu.rows() || eps.cols() != g.mu.cols())
    throw InvalidInput("eps shape does not match the embedding");
  return (g.mu.array() + eps.array() * g.log_sigma.array().exp()).matrix();
}

VectorXd pool_and_flatten(const FeatureMap& f) {
  if (f.cols() == 0) throw InvalidInput("feature map has no positions");
  return f.rowwise().mean();
}

VectorXd predict(const MatrixXd& classifier, const VectorXd& pooled) {
  if (classifier.cols() != pooled.size())
    throw InvalidInput("classifier expects " + std::to_string(classifier.cols()) +
                       " features, got " + std::to_string(pooled.size()));
  return classifier * pooled;
}

namespace {

std::vector<MatrixXd> as_columns(std::span<const VectorXd> inputs) {
  std::vector<MatrixXd> cols;
  cols.reserve(inputs.size());
  for (const auto& x : inputs) cols.emplace_back(x);
  return cols;
}

}  // namespace

TrainForward forward_train(const ModelParameters& params, const ModelConfig& config,
                           std::span<const VectorXd> inputs, const CombinationMask& mask,
                           RandomSource& rng) {
  const auto cols = as_columns(inputs);
  MatrixXd eps(static_cast<Index>(config.channels), static_cast<Index>(config.positions));
  for (Index j = 0; j < eps.cols(); ++j)
    for (Index i = 0; i < eps.rows(); ++i) eps(i, j) = rng.normal();
  const CombinationMask masks[] = {mask};
  const auto pass = forward_batch(params, config, cols, masks, &eps, Normalization::running_statistics);
  return TrainForward{pass.logits.col(0), GaussianEmbedding{pass.mu, pass.log_sigma}, pass.embedding};
}

VectorXd forward_infer(const ModelParameters& params, const ModelConfig& config,
                       std::span<const VectorXd> inputs, const CombinationMask& mask) {
  const auto cols = as_columns(inputs);
  const CombinationMask masks[] = {mask};
  return forward_batch(params, config, cols, masks, nullptr, Normalization::running_statistics)
      .logits.col(0);
}

// ---------------------------------------------------------------------------
// Batched path

ForwardPass forward_batch(const ModelParameters& params, const ModelConfig& config,
                          std::span<const MatrixXd> inputs, std::span<const CombinationMask> masks,
                          const MatrixXd* eps, Normalization normalization) {
  check_inputs(config, inputs, masks);
  const auto V = config.modalities();
  const auto C = static_cast<Index>(config.channels);
  const auto S = static_cast<Index>(config.positions);
  const Index B = inputs[0].cols();

  ForwardPass pass;
  pass.batch_size = static_cast<std::size_t>(B);
  pass.normalization = normalization;
  pass.masks.assign(masks.begin(), masks.end());
  pass.inputs.assign(inputs.begin(), inputs.end());
  pass.encoder_pre.resize(V);
  pass.encoder_out.resize(V);
  pass.features.resize(V);
  pass.fused_input.resize(static_cast<Index>(V) * C, B * S);

  for (std::size_t v = 0; v < V; ++v) {
    MatrixXd h = inputs[v];
    for (const auto& layer : params.encoders[v].layers) {
      MatrixXd pre = (layer.weight * h).colwise() + layer.bias;
      h = activate(config.activation, pre);
      pass.encoder_pre[v].push_back(std::move(pre));
      pass.encoder_out[v].push_back(h);
    }
    pass.features[v] = fold_features(h, config.channels, config.positions);
    auto block = pass.fused_input.middleRows(static_cast<Index>(v) * C, C);
    for (Index b = 0; b < B; ++b) {
      if (masks[b].present(v))
        block.middleCols(b * S, S) = pass.features[v].middleCols(b * S, S);
      else
        block.middleCols(b * S, S).setZero();
    }
  }

  pass.fused = (params.fusion.weight * pass.fused_input).colwise() + params.fusion.bias;
  pass.mu_pass = head_forward(params.mu_head, pass.fused, normalization, config.norm_epsilon);
  pass.sigma_pass = head_forward(params.sigma_head, pass.fused, normalization, config.norm_epsilon);
  pass.mu = head_output(params.mu_head, pass.mu_pass);
  pass.log_sigma_raw = head_output(params.sigma_head, pass.sigma_pass);
  pass.log_sigma = pass.log_sigma_raw.cwiseMax(kLogSigmaMin).cwiseMin(kLogSigmaMax);
  pass.sigma = pass.log_sigma.array().exp().matrix();

  if (eps != nullptr) {
    if (eps->rows() != C || eps->cols() != B * S)
      throw InvalidInput("eps shape does not match the batch embedding");
    pass.sampled = true;
    pass.eps = *eps;
    pass.embedding = (pass.mu.array() + pass.eps.array() * pass.sigma.array()).matrix();
  } else {
    pass.embedding = pass.mu;
  }

  pass.pooled.resize(C, B);
  for (Index b = 0; b < B; ++b) pass.pooled.col(b) = pass.embedding.middleCols(b * S, S).rowwise().mean();
  pass.logits = params.classifier * pass.pooled;
  return pass;
}

ModelParameters backward_batch(const ModelParameters& params, const ModelConfig& config,
                               const ForwardPass& pass, const OutputGradients& grads) {
  const auto V = config.modalities();
  const auto C = static_cast<Index>(config.channels);
  const auto S = static_cast<Index>(config.positions);
  const auto B = static_cast<Index>(pass.batch_size);
  if (grads.logits.rows() != pass.logits.rows() || grads.logits.cols() != B)
    throw InvalidInput("logit gradient shape mismatch");

  ModelParameters g = zeros_like(params);
  g.classifier = grads.logits * pass.pooled.transpose();
  const MatrixXd dpooled = params.classifier.transpose() * grads.logits;

  MatrixXd dembed(C, B * S);
  for (Index b = 0; b < B; ++b)
    dembed.middleCols(b * S, S) = (dpooled.col(b) / static_cast<double>(S)).replicate(1, S);

  MatrixXd dmu = dembed;
  if (grads.mu.size() != 0) dmu += grads.mu;

  MatrixXd dlog_sigma = MatrixXd::Zero(C, B * S);
  if (pass.sampled) dlog_sigma = (dembed.array() * pass.eps.array() * pass.sigma.array()).matrix();
  if (grads.log_sigma.size() != 0) dlog_sigma += grads.log_sigma;
  const MatrixXd dlog_sigma_raw =
      (dlog_sigma.array() *
       ((pass.log_sigma_raw.array() > kLogSigmaMin) && (pass.log_sigma_raw.array() < kLogSigmaMax))
           .cast<double>())
          .matrix();

  MatrixXd dz = head_backward(params.mu_head, pass.mu_pass, pass.fused, dmu, pass.normalization, g.mu_head);
  dz += head_backward(params.sigma_head, pass.sigma_pass, pass.fused, dlog_sigma_raw, pass.normalization,
                      g.sigma_head);

  g.fusion.weight = dz * pass.fused_input.transpose();
  g.fusion.bias = dz.rowwise().sum();
  const MatrixXd dstacked = params.fusion.weight.transpose() * dz;

  for (std::size_t v = 0; v < V; ++v) {
    MatrixXd dfeat = dstacked.middleRows(static_cast<Index>(v) * C, C);
    for (Index b = 0; b < B; ++b)
      if (!pass.masks[b].present(v)) dfeat.middleCols(b * S, S).setZero();
    MatrixXd dh = unfold_features(dfeat, config.channels, config.positions);
    const auto& layers = params.encoders[v].layers;
    for (std::size_t l = layers.size(); l-- > 0;) {
      const MatrixXd dpre = activation_backward(config.activation, pass.encoder_pre[v][l],
                                                pass.encoder_out[v][l], dh);
      const MatrixXd& below = (l == 0) ? pass.inputs[v] : pass.encoder_out[v][l - 1];
      g.encoders[v].layers[l].weight = dpre * below.transpose();
      g.encoders[v].layers[l].bias = dpre.rowwise().sum();
      if (l > 0) dh = layers[l].weight.transpose() * dpre;
    }
  }
  return g;
}

void update_running_statistics(ModelParameters& params, const ForwardPass& pass, double momentum) {
  if (pass.normalization != Normalization::batch_statistics) return;
  auto blend = [momentum](DistributionHead& head, const HeadPass& hp) {
    head.running_mean = (1.0 - momentum) * head.running_mean + momentum * hp.mean;
    head.running_var = (1.0 - momentum) * head.running_var + momentum * hp.var;
  };
  blend(params.mu_head, pass.mu_pass);
  blend(params.sigma_head, pass.sigma_pass);
}

FeatureMap sample_map(const MatrixXd& batch_maps, std::size_t sample, std::size_t positions) {
  const auto S = static_cast<Index>(positions);
  return batch_maps.middleCols(static_cast<Index>(sample) * S, S);
}

}  // namespace dmr
