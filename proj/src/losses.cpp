#include "dmr/losses.hpp"

#include <cmath>

#include "dmr/errors.hpp"

namespace dmr {

namespace {

void check_label(int label, Eigen::Index classes) {
  if (label < 1 || label > classes)
    throw InvalidInput("label " + std::to_string(label) + " outside [1, " + std::to_string(classes) + "]");
}

double log_sum_exp(const Eigen::VectorXd& x) {
  const double m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

}  // namespace

double cross_entropy(const Eigen::VectorXd& logits, int label) {
  check_label(label, logits.size());
  return log_sum_exp(logits) - logits(label - 1);
}

double distribution_regularizer(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& log_sigma) {
  if (mu.rows() != log_sigma.rows() || mu.cols() != log_sigma.cols())
    throw InvalidInput("mu and log-sigma shapes differ");
  if (mu.size() == 0) throw InvalidInput("empty embedding");
  const auto kl = 0.5 * (mu.array().square() + (2.0 * log_sigma.array()).exp() - 1.0 -
                         2.0 * log_sigma.array());
  return kl.sum() / static_cast<double>(mu.size());
}

double distribution_regularizer(const GaussianEmbedding& g) {
  return distribution_regularizer(g.mu, g.log_sigma);
}

double hard_combination_loss(const Eigen::VectorXd& pooled_sampled, int label,
                             const CombinationMask& mask, const std::optional<HardSet>& hard,
                             const Eigen::MatrixXd& classifier) {
  if (!hard || !hard->contains(mask.index())) return 0.0;
  return cross_entropy(predict(classifier, pooled_sampled), label);
}

LossEvaluation total_loss(const ForwardPass& pass, std::span<const int> labels,
                          const std::optional<HardSet>& hard, double alpha, double beta) {
  const auto B = static_cast<Eigen::Index>(pass.batch_size);
  if (B == 0) throw InvalidInput("empty batch");
  if (labels.size() != pass.batch_size) throw InvalidInput("need one label per sample");
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw InvalidInput("alpha and beta must be non-negative");

  const Eigen::Index M = pass.logits.rows();
  LossEvaluation out;
  out.gradients.logits.resize(M, B);

  double ce_sum = 0.0, hcr_sum = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    check_label(y, M);
    const Eigen::VectorXd z = pass.logits.col(b);
    const double lse = log_sum_exp(z);
    const double ce = lse - z(y - 1);
    const bool is_hard = hard && hard->contains(pass.masks[static_cast<std::size_t>(b)].index());
    ce_sum += ce;
    if (is_hard) {
      hcr_sum += ce;
      ++out.hard_samples;
    }
    Eigen::VectorXd dz = (z.array() - lse).exp().matrix();
    dz(y - 1) -= 1.0;
    out.gradients.logits.col(b) = dz * ((1.0 + (is_hard ? beta : 0.0)) / static_cast<double>(B));
  }

  const double n_el = static_cast<double>(pass.mu.size());
  auto& br = out.breakdown;
  br.l_ttl = ce_sum / static_cast<double>(B);
  br.l_hcr = hcr_sum / static_cast<double>(B);
  br.l_dr = distribution_regularizer(pass.mu, pass.log_sigma);
  br.alpha = alpha;
  br.beta = beta;
  br.total = br.l_ttl + alpha * br.l_dr + beta * br.l_hcr;

  if (alpha != 0.0) {
    out.gradients.mu = (alpha / n_el) * pass.mu;
    out.gradients.log_sigma = ((alpha / n_el) * ((2.0 * pass.log_sigma.array()).exp() - 1.0)).matrix();
  }
  return out;
}

}  // namespace dmr
