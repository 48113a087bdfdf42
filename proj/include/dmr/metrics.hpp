#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dmr/combinations.hpp"
#include "dmr/datasynth.hpp"
#include "dmr/model.hpp"

namespace dmr {

double accuracy(std::span<const int> predictions, std::span<const int> truths);

// Binary anti-spoofing error: mean of APCER (attacks accepted as bona fide)
// and BPCER (bona fide rejected as attacks).
struct AcerResult {
  double apcer = 0.0;
  double bpcer = 0.0;
  double acer = 0.0;
};
AcerResult acer(std::span<const int> predictions, std::span<const int> truths, int attack_label = 1);

enum class ChannelScope { intra, inter };
enum class ChannelMetric {
  cosine,   // normalize channel vectors, then take pairwise cosines
  literal,  // row-normalize the raw Gram matrix F_m F_n^T
};

std::string to_string(ChannelMetric m);
ChannelMetric channel_metric_from_string(const std::string& name);

struct ChannelDistanceMatrix {
  Eigen::MatrixXd values;  // C_m x C_n, entries in [0, 2]
  ChannelScope scope = ChannelScope::inter;
};

ChannelDistanceMatrix channel_distance(const FeatureMap& f_m, const FeatureMap& f_n,
                                       ChannelScope scope,
                                       ChannelMetric metric = ChannelMetric::cosine);

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges over [0, 2]
  std::vector<std::uint64_t> counts;
  double mean = 0.0;
  std::uint64_t total = 0;
};

// Empty histogram over [0, 2] with the given bin count.
Histogram make_histogram(std::size_t bins);
// Adds the entries of d (diagonal excluded in intra scope) to h.
void accumulate_histogram(Histogram& h, const ChannelDistanceMatrix& d);
Histogram diversity_histogram(const ChannelDistanceMatrix& d, std::size_t bins);

enum class MetricKind { accuracy, acer };

std::string to_string(MetricKind k);
MetricKind metric_kind_from_string(const std::string& name);

struct CombinationRow {
  CombinationIndex index = 0;
  std::string bits;
  double metric = 0.0;
  std::size_t samples = 0;
};

struct CombinationResultTable {
  MetricKind kind = MetricKind::accuracy;
  std::vector<CombinationRow> rows;  // ascending index, 2^V - 1 rows
  double average = 0.0;

  const CombinationRow& row(CombinationIndex index) const;
};

std::vector<int> predict_labels(const Eigen::MatrixXd& logits);

// Mean-path inference under every non-empty combination.
CombinationResultTable per_combination_eval(const ModelParameters& params, const ModelConfig& config,
                                            const Dataset& dataset, MetricKind kind);

void write_results_csv(std::ostream& out, const CombinationResultTable& table);
void write_histogram_csv(std::ostream& out, const Histogram& h);

// Mean inter-channel distance of encoder feature maps averaged over a
// dataset, plus the pooled histogram.
struct DiversitySummary {
  std::size_t modality_m = 0;  // 1-based
  std::size_t modality_n = 0;
  ChannelMetric metric = ChannelMetric::cosine;
  Histogram histogram;
  double mean = 0.0;
  std::size_t samples = 0;
  std::size_t skipped = 0;  // samples with a zero-norm channel
};

DiversitySummary modality_diversity(const ModelParameters& params, const ModelConfig& config,
                                    const Dataset& dataset, std::size_t modality_m,
                                    std::size_t modality_n, std::size_t bins,
                                    ChannelMetric metric = ChannelMetric::cosine);

}  // namespace dmr
