#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dmr/combinations.hpp"
#include "dmr/rng.hpp"

namespace dmr {

inline constexpr double kLogSigmaMin = -10.0;
inline constexpr double kLogSigmaMax = 10.0;

enum class Activation { identity, tanh, relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct ModelConfig {
  std::vector<std::size_t> input_dims;  // one entry per modality
  std::size_t hidden = 32;              // 0 selects a single affine layer per encoder
  std::size_t channels = 8;
  std::size_t positions = 4;
  std::size_t classes = 4;
  Activation activation = Activation::tanh;
  double norm_epsilon = 1e-5;
  double norm_momentum = 0.1;
  // Initial scale of the normalization gain in the log-sigma head.
  double sigma_gain_init = 1.0;

  std::size_t modalities() const { return input_dims.size(); }
  std::size_t feature_size() const { return channels * positions; }
  void validate() const;
};

struct AffineLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

struct EncoderParams {
  std::vector<AffineLayer> layers;
};

// Per-position linear map followed by per-channel normalization; the 1x1
// convolution + batch norm of an image model, applied to C x S maps.
struct DistributionHead {
  Eigen::MatrixXd weight;  // C x C
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
};

struct ModelParameters {
  std::vector<EncoderParams> encoders;
  AffineLayer fusion;  // C x (V*C)
  DistributionHead mu_head;
  DistributionHead sigma_head;
  Eigen::MatrixXd classifier;  // M x C; row k is the class weight W_k
};

struct ParameterView {
  std::string name;
  std::string group;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;
  std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

struct ConstParameterView {
  std::string name;
  std::string group;
  const double* data;
  Eigen::Index rows;
  Eigen::Index cols;
  std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

// Trainable tensors in a fixed order. Groups are "encoder<v>", "fusion",
// "mu_head", "sigma_head" and "classifier".
std::vector<ParameterView> parameter_views(ModelParameters& params);
std::vector<ConstParameterView> parameter_views(const ModelParameters& params);
// Normalization running statistics (not trained by gradient).
std::vector<ParameterView> buffer_views(ModelParameters& params);
std::vector<ConstParameterView> buffer_views(const ModelParameters& params);

std::size_t parameter_count(const ModelParameters& params);

ModelParameters init_parameters(const ModelConfig& config, RandomSource& rng);
ModelParameters zeros_like(const ModelParameters& params);
// Throws IncompatibleCheckpoint if any tensor shape disagrees with config.
void check_compatible(const ModelParameters& params, const ModelConfig& config);

struct GaussianEmbedding {
  FeatureMap mu;
  FeatureMap log_sigma;  // clamped to [kLogSigmaMin, kLogSigmaMax]

  FeatureMap sigma() const { return log_sigma.array().exp().matrix(); }
  FeatureMap variance() const { return (2.0 * log_sigma.array()).exp().matrix(); }
};

FeatureMap encode_modality(const EncoderParams& encoder, const ModelConfig& config,
                           const Eigen::VectorXd& input);
FeatureMap fuse(const AffineLayer& fusion, std::span<const FeatureMap> masked_features);
// Uses the heads' running statistics (single-sample path).
GaussianEmbedding estimate_distribution(const DistributionHead& mu_head,
                                        const DistributionHead& sigma_head, const FeatureMap& z,
                                        double norm_epsilon);
FeatureMap reparameterize(const GaussianEmbedding& g, const FeatureMap& eps);
Eigen::VectorXd pool_and_flatten(const FeatureMap& f);
Eigen::VectorXd predict(const Eigen::MatrixXd& classifier, const Eigen::VectorXd& pooled);

struct TrainForward {
  Eigen::VectorXd logits;
  GaussianEmbedding distribution;
  FeatureMap sampled;
};

// Single-sample paths. forward_train draws one standard-normal eps per
// element of the embedding; both use running normalization statistics.
TrainForward forward_train(const ModelParameters& params, const ModelConfig& config,
                           std::span<const Eigen::VectorXd> inputs, const CombinationMask& mask,
                           RandomSource& rng);
Eigen::VectorXd forward_infer(const ModelParameters& params, const ModelConfig& config,
                              std::span<const Eigen::VectorXd> inputs,
                              const CombinationMask& mask);

// ---------------------------------------------------------------------------
// Batched path used for training and evaluation.
//
// Feature maps of a batch are stored side by side as C x (B*S) matrices;
// column b*S + s is position s of sample b.

enum class Normalization { batch_statistics, running_statistics };

struct HeadPass {
  Eigen::MatrixXd pre;         // W z
  Eigen::MatrixXd normalized;  // (pre - mean) * inv_std
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
  Eigen::VectorXd inv_std;
};

struct ForwardPass {
  std::size_t batch_size = 0;
  Normalization normalization = Normalization::batch_statistics;
  std::vector<CombinationMask> masks;
  std::vector<Eigen::MatrixXd> inputs;  // d_v x B
  // [modality][layer]
  std::vector<std::vector<Eigen::MatrixXd>> encoder_pre;
  std::vector<std::vector<Eigen::MatrixXd>> encoder_out;
  std::vector<Eigen::MatrixXd> features;  // unmasked modality maps, C x BS
  Eigen::MatrixXd fused_input;            // masked concatenation, VC x BS
  Eigen::MatrixXd fused;                  // z
  HeadPass mu_pass;
  HeadPass sigma_pass;
  Eigen::MatrixXd mu;
  Eigen::MatrixXd log_sigma_raw;
  Eigen::MatrixXd log_sigma;
  Eigen::MatrixXd sigma;
  bool sampled = false;
  Eigen::MatrixXd eps;
  Eigen::MatrixXd embedding;  // s on the sampled path, mu otherwise
  Eigen::MatrixXd pooled;     // C x B
  Eigen::MatrixXd logits;     // M x B
};

// inputs[v] is d_v x B. When eps is null the embedding is mu (the inference
// path, and the training path of the vanilla baseline).
ForwardPass forward_batch(const ModelParameters& params, const ModelConfig& config,
                          std::span<const Eigen::MatrixXd> inputs,
                          std::span<const CombinationMask> masks, const Eigen::MatrixXd* eps,
                          Normalization normalization);

// Gradients of a scalar objective with respect to the forward outputs.
struct OutputGradients {
  Eigen::MatrixXd logits;     // M x B
  Eigen::MatrixXd mu;         // direct terms, C x BS (may be empty)
  Eigen::MatrixXd log_sigma;  // direct terms on the clamped log-sigma (may be empty)
};

ModelParameters backward_batch(const ModelParameters& params, const ModelConfig& config,
                               const ForwardPass& pass, const OutputGradients& grads);

void update_running_statistics(ModelParameters& params, const ForwardPass& pass, double momentum);

// Slice of sample b from a C x BS batch matrix.
FeatureMap sample_map(const Eigen::MatrixXd& batch_maps, std::size_t sample, std::size_t positions);

}  // namespace dmr
