#pragma once

#include <optional>
#include <span>

#include <Eigen/Dense>

#include "dmr/combinations.hpp"
#include "dmr/mining.hpp"
#include "dmr/model.hpp"

namespace dmr {

struct LossBreakdown {
  double l_ttl = 0.0;
  double l_dr = 0.0;
  double l_hcr = 0.0;
  double total = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
};

// -log softmax(logits)[label], label in [1, M].
double cross_entropy(const Eigen::VectorXd& logits, int label);

// Mean over elements of KL[N(mu, sigma^2) || N(0, 1)].
double distribution_regularizer(const GaussianEmbedding& g);
double distribution_regularizer(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& log_sigma);

// Cross-entropy of the shared classifier on the pooled sampled embedding,
// or exactly 0 when the sample's combination is not in the hard set.
double hard_combination_loss(const Eigen::VectorXd& pooled_sampled, int label,
                             const CombinationMask& mask, const std::optional<HardSet>& hard,
                             const Eigen::MatrixXd& classifier);

struct LossEvaluation {
  LossBreakdown breakdown;
  OutputGradients gradients;
  std::size_t hard_samples = 0;
};

// Batch means of each term (L_HCR averaged over the whole batch, zeros
// included) and their gradients with respect to the forward outputs.
LossEvaluation total_loss(const ForwardPass& pass, std::span<const int> labels,
                          const std::optional<HardSet>& hard, double alpha, double beta);

}  // namespace dmr
