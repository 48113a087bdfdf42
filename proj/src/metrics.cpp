#include "dmr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "dmr/errors.hpp"

namespace dmr {

namespace {

constexpr double kDistanceMax = 2.0;

Eigen::MatrixXd normalized_rows(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index k = 0; k < m.rows(); ++k) {
    const double norm = m.row(k).norm();
    if (!(norm > 0.0) || !std::isfinite(norm))
      throw DegenerateChannel("channel " + std::to_string(k + 1) + " has zero norm");
    out.row(k) = m.row(k) / norm;
  }
  return out;
}

double clamp_distance(double x) { return std::clamp(x, 0.0, kDistanceMax); }

}  // namespace

double accuracy(std::span<const int> predictions, std::span<const int> truths) {
  if (predictions.empty()) throw InvalidInput("accuracy of an empty set");
  if (predictions.size() != truths.size()) throw InvalidInput("prediction and truth lengths differ");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == truths[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

AcerResult acer(std::span<const int> predictions, std::span<const int> truths, int attack_label) {
  if (predictions.size() != truths.size()) throw InvalidInput("prediction and truth lengths differ");
  std::size_t attacks = 0, bona_fide = 0, attacks_accepted = 0, bona_fide_rejected = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const bool is_attack = truths[i] == attack_label;
    const bool called_attack = predictions[i] == attack_label;
    if (is_attack) {
      ++attacks;
      attacks_accepted += !called_attack;
    } else {
      ++bona_fide;
      bona_fide_rejected += called_attack;
    }
  }
  if (attacks == 0 || bona_fide == 0) throw UndefinedMetric("ACER needs both attack and bona fide samples");
  AcerResult r;
  r.apcer = static_cast<double>(attacks_accepted) / static_cast<double>(attacks);
  r.bpcer = static_cast<double>(bona_fide_rejected) / static_cast<double>(bona_fide);
  r.acer = 0.5 * (r.apcer + r.bpcer);
  return r;
}

std::string to_string(ChannelMetric m) { return m == ChannelMetric::cosine ? "cosine" : "literal"; }

ChannelMetric channel_metric_from_string(const std::string& name) {
  if (name == "cosine") return ChannelMetric::cosine;
  if (name == "literal") return ChannelMetric::literal;
  throw InvalidInput("unknown channel metric '" + name + "'");
}

ChannelDistanceMatrix channel_distance(const FeatureMap& f_m, const FeatureMap& f_n, ChannelScope scope,
                                       ChannelMetric metric) {
  if (f_m.cols() != f_n.cols()) throw InvalidInput("feature maps have different spatial sizes");
  if (scope == ChannelScope::intra && (f_m.rows() != f_n.rows()))
    throw InvalidInput("intra-modality distance needs maps of equal shape");
  ChannelDistanceMatrix d;
  d.scope = scope;
  const Eigen::Index cm = f_m.rows(), cn = f_n.rows();
  d.values.resize(cm, cn);

  if (metric == ChannelMetric::cosine) {
    const Eigen::MatrixXd a = normalized_rows(f_m);
    const Eigen::MatrixXd b = scope == ChannelScope::intra ? a : normalized_rows(f_n);
    if (scope == ChannelScope::intra) {
      for (Eigen::Index i = 0; i < cm; ++i) {
        d.values(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < cn; ++j) {
          const double v = clamp_distance(1.0 - a.row(i).dot(b.row(j)));
          d.values(i, j) = v;
          d.values(j, i) = v;
        }
      }
    } else {
      for (Eigen::Index i = 0; i < cm; ++i)
        for (Eigen::Index j = 0; j < cn; ++j) d.values(i, j) = clamp_distance(1.0 - a.row(i).dot(b.row(j)));
    }
  } else {
    const Eigen::MatrixXd gram = f_m * f_n.transpose();
    const Eigen::MatrixXd rows = normalized_rows(gram);
    d.values = (1.0 - rows.array()).matrix().unaryExpr(&clamp_distance);
  }
  return d;
}

Histogram make_histogram(std::size_t bins) {
  if (bins < 1) throw InvalidInput("histogram needs at least one bin");
  Histogram h;
  h.counts.assign(bins, 0);
  h.edges.resize(bins + 1);
  for (std::size_t k = 0; k <= bins; ++k)
    h.edges[k] = kDistanceMax * static_cast<double>(k) / static_cast<double>(bins);
  return h;
}

void accumulate_histogram(Histogram& h, const ChannelDistanceMatrix& d) {
  const std::size_t bins = h.counts.size();
  double sum = h.mean * static_cast<double>(h.total);
  for (Eigen::Index i = 0; i < d.values.rows(); ++i)
    for (Eigen::Index j = 0; j < d.values.cols(); ++j) {
      if (d.scope == ChannelScope::intra && i == j) continue;
      const double x = d.values(i, j);
      auto bin = static_cast<std::size_t>(x / kDistanceMax * static_cast<double>(bins));
      bin = std::min(bin, bins - 1);
      ++h.counts[bin];
      ++h.total;
      sum += x;
    }
  h.mean = h.total ? sum / static_cast<double>(h.total) : 0.0;
}

Histogram diversity_histogram(const ChannelDistanceMatrix& d, std::size_t bins) {
  Histogram h = make_histogram(bins);
  accumulate_histogram(h, d);
  return h;
}

std::string to_string(MetricKind k) { return k == MetricKind::accuracy ? "accuracy" : "acer"; }

MetricKind metric_kind_from_string(const std::string& name) {
  if (name == "accuracy") return MetricKind::accuracy;
  if (name == "acer") return MetricKind::acer;
  throw InvalidInput("unknown metric '" + name + "'");
}

const CombinationRow& CombinationResultTable::row(CombinationIndex index) const {
  for (const auto& r : rows)
    if (r.index == index) return r;
  throw InvalidInput("table has no row for combination " + std::to_string(index));
}

std::vector<int> predict_labels(const Eigen::MatrixXd& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    Eigen::Index k = 0;
    logits.col(b).maxCoeff(&k);
    out[static_cast<std::size_t>(b)] = static_cast<int>(k) + 1;
  }
  return out;
}

CombinationResultTable per_combination_eval(const ModelParameters& params, const ModelConfig& config,
                                            const Dataset& dataset, MetricKind kind) {
  if (dataset.empty()) throw InvalidInput("evaluation dataset is empty");
  const auto inputs = dataset.gather_all();
  const auto truths = dataset.labels();
  CombinationResultTable table;
  table.kind = kind;
  double sum = 0.0;
  for (const auto& mask : enumerate_combinations(config.modalities())) {
    const std::vector<CombinationMask> masks(dataset.size(), mask);
    const auto pass = forward_batch(params, config, inputs, masks, nullptr, Normalization::running_statistics);
    const auto predictions = predict_labels(pass.logits);
    CombinationRow row;
    row.index = mask.index();
    row.bits = mask.bitstring();
    row.samples = dataset.size();
    row.metric = kind == MetricKind::accuracy ? accuracy(predictions, truths) : acer(predictions, truths).acer;
    sum += row.metric;
    table.rows.push_back(std::move(row));
  }
  table.average = sum / static_cast<double>(table.rows.size());
  return table;
}

void write_results_csv(std::ostream& out, const CombinationResultTable& table) {
  char buf[64];
  out << "index,bits," << to_string(table.kind) << ",n_samples\n";
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof buf, "%.10f", r.metric);
    out << r.index << ',' << r.bits << ',' << buf << ',' << r.samples << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.10f", table.average);
  const std::size_t n = table.rows.empty() ? 0 : table.rows.front().samples;
  out << "average,," << buf << ',' << n << '\n';
}

void write_histogram_csv(std::ostream& out, const Histogram& h) {
  char buf[96];
  out << "bin_left,bin_right,count\n";
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,", h.edges[k], h.edges[k + 1]);
    out << buf << h.counts[k] << '\n';
  }
}

DiversitySummary modality_diversity(const ModelParameters& params, const ModelConfig& config,
                                    const Dataset& dataset, std::size_t modality_m, std::size_t modality_n,
                                    std::size_t bins, ChannelMetric metric) {
  const auto V = config.modalities();
  if (modality_m < 1 || modality_m > V || modality_n < 1 || modality_n > V)
    throw InvalidInput("modality index out of range");
  if (dataset.empty()) throw InvalidInput("diversity over an empty dataset");
  DiversitySummary out;
  out.modality_m = modality_m;
  out.modality_n = modality_n;
  out.metric = metric;
  out.histogram = make_histogram(bins);
  const auto scope = modality_m == modality_n ? ChannelScope::intra : ChannelScope::inter;
  double sum = 0.0;
  for (const auto& s : dataset.samples) {
    const FeatureMap fm = encode_modality(params.encoders[modality_m - 1], config, s.x[modality_m - 1]);
    const FeatureMap fn =
        scope == ChannelScope::intra ? fm : encode_modality(params.encoders[modality_n - 1], config, s.x[modality_n - 1]);
    try {
      const auto d = channel_distance(fm, fn, scope, metric);
      Histogram single = diversity_histogram(d, bins);
      for (std::size_t k = 0; k < bins; ++k) out.histogram.counts[k] += single.counts[k];
      out.histogram.total += single.total;
      sum += single.mean * static_cast<double>(single.total);
      ++out.samples;
    } catch (const DegenerateChannel&) {
      ++out.skipped;
    }
  }
  out.histogram.mean = out.histogram.total ? sum / static_cast<double>(out.histogram.total) : 0.0;
  out.mean = out.histogram.mean;
  return out;
}

}  // namespace dmr
