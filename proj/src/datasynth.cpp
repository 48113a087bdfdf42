#include "dmr/datasynth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "dmr/config.hpp"
#include "dmr/errors.hpp"
#include "dmr/rng.hpp"

namespace dmr {

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, RandomSource& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = stddev * rng.normal();
  return m;
}

struct ClassModel {
  // means[y][v]: noiseless observation of class y in modality v (already SNR-scaled)
  std::vector<std::vector<Eigen::VectorXd>> means;
};

ClassModel build_class_model(const SyntheticSpec& spec) {
  RandomSource rng(spec.seed, Stream::data_structure);
  const auto ks = static_cast<Eigen::Index>(spec.shared_dim);
  const auto km = static_cast<Eigen::Index>(spec.specific_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(ks + km));
  const auto V = spec.modalities();

  std::vector<Eigen::VectorXd> shared_codes;
  for (std::size_t y = 0; y < spec.classes; ++y) shared_codes.push_back(gaussian(ks, 1, 1.0, rng));
  std::vector<std::vector<Eigen::VectorXd>> specific_codes(spec.classes);
  for (std::size_t y = 0; y < spec.classes; ++y)
    for (std::size_t v = 0; v < V; ++v) specific_codes[y].push_back(gaussian(km, 1, 1.0, rng));

  ClassModel model;
  model.means.assign(spec.classes, std::vector<Eigen::VectorXd>(V));
  for (std::size_t v = 0; v < V; ++v) {
    const auto d = static_cast<Eigen::Index>(spec.input_dims[v]);
    const Eigen::MatrixXd shared_proj = gaussian(d, ks, scale, rng);
    const Eigen::MatrixXd specific_proj = gaussian(d, km, scale, rng);
    for (std::size_t y = 0; y < spec.classes; ++y)
      model.means[y][v] =
          spec.snr[v] * (shared_proj * shared_codes[y] + specific_proj * specific_codes[y][v]);
  }
  return model;
}

Dataset draw_split(const SyntheticSpec& spec, const ClassModel& model, std::size_t n, Stream stream) {
  RandomSource noise(spec.seed, stream);
  RandomSource order(spec.seed,
                     stream == Stream::data_train ? Stream::data_train_labels : Stream::data_test_labels);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % spec.classes) + 1;
  std::shuffle(labels.begin(), labels.end(), order.engine());

  Dataset ds;
  ds.classes = spec.classes;
  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    MultimodalSample s;
    s.label = labels[i];
    for (std::size_t v = 0; v < spec.modalities(); ++v) {
      const auto& mean = model.means[static_cast<std::size_t>(s.label - 1)][v];
      s.x.push_back(mean + gaussian(mean.size(), 1, 1.0, noise));
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (input_dims.empty()) throw InvalidInput("dataset needs at least one modality");
  if (snr.size() != input_dims.size()) throw InvalidInput("need one SNR multiplier per modality");
  if (classes < 2) throw InvalidInput("need at least two classes");
  for (auto d : input_dims)
    if (d < 1) throw InvalidInput("input dimensions must be >= 1");
  for (auto s : snr)
    if (!(s > 0.0) || !std::isfinite(s)) throw InvalidInput("SNR multipliers must be positive");
  if (shared_dim < 1 || specific_dim < 1) throw InvalidInput("signal dimensions must be >= 1");
  if (train_size < classes || test_size < classes)
    throw InvalidInput("split sizes must be at least the class count");
}

std::vector<Eigen::MatrixXd> Dataset::gather(std::span<const std::size_t> indices) const {
  std::vector<Eigen::MatrixXd> out;
  if (samples.empty()) return out;
  const auto V = modalities();
  for (std::size_t v = 0; v < V; ++v) {
    Eigen::MatrixXd m(samples.front().x[v].size(), static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = samples.at(indices[i]).x[v];
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<Eigen::MatrixXd> Dataset::gather_all() const {
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  return gather(idx);
}

std::vector<int> Dataset::labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(samples.at(i).label);
  return out;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

SplitDataset generate_dataset(const SyntheticSpec& spec) {
  spec.validate();
  const auto model = build_class_model(spec);
  return SplitDataset{draw_split(spec, model, spec.train_size, Stream::data_train),
                      draw_split(spec, model, spec.test_size, Stream::data_test)};
}

Dataset select_modality(const Dataset& dataset, std::size_t v) {
  if (v < 1 || v > dataset.modalities()) throw InvalidInput("modality index out of range");
  Dataset out;
  out.classes = dataset.classes;
  out.samples.reserve(dataset.size());
  for (const auto& s : dataset.samples) out.samples.push_back(MultimodalSample{{s.x[v - 1]}, s.label});
  return out;
}

std::vector<std::size_t> class_balance(const Dataset& dataset) {
  if (dataset.empty()) throw InvalidInput("empty dataset");
  std::vector<std::size_t> counts(dataset.classes, 0);
  for (const auto& s : dataset.samples) {
    if (s.label < 1 || static_cast<std::size_t>(s.label) > dataset.classes)
      throw InvalidInput("label out of range");
    ++counts[static_cast<std::size_t>(s.label - 1)];
  }
  return counts;
}

void export_dataset(std::ostream& out, const SyntheticSpec& spec, const SplitDataset& data) {
  out << "# " << synthetic_spec_to_json(spec).dump() << '\n';
  out << "split,label";
  for (std::size_t v = 0; v < spec.modalities(); ++v)
    for (std::size_t k = 0; k < spec.input_dims[v]; ++k) out << ",m" << (v + 1) << '_' << k;
  out << '\n';
  char buf[32];
  auto rows = [&](const char* split, const Dataset& ds) {
    for (const auto& s : ds.samples) {
      out << split << ',' << s.label;
      for (const auto& x : s.x)
        for (Eigen::Index k = 0; k < x.size(); ++k) {
          std::snprintf(buf, sizeof buf, "%.17g", x(k));
          out << ',' << buf;
        }
      out << '\n';
    }
  };
  rows("train", data.train);
  rows("test", data.test);
}

}  // namespace dmr
