#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace dmr {

// Gaussian class-latent generator. Class y owns a shared code u_y and one
// modality-specific code w_{y,v} per modality; modality v observes
//   x_v = snr_v * (P_v u_y + Q_v w_{y,v}) + n,   n ~ N(0, I)
// with fixed random projections P_v, Q_v scaled so that the noiseless signal
// has unit variance per coordinate.
struct SyntheticSpec {
  std::size_t classes = 4;
  std::vector<std::size_t> input_dims{16, 16, 16};
  std::vector<double> snr{0.05, 0.35, 0.35};
  std::size_t shared_dim = 4;
  std::size_t specific_dim = 4;
  std::size_t train_size = 200;
  std::size_t test_size = 2000;
  std::uint64_t seed = 0;

  std::size_t modalities() const { return input_dims.size(); }
  void validate() const;
};

struct MultimodalSample {
  std::vector<Eigen::VectorXd> x;
  int label = 1;  // in [1, M]
};

struct Dataset {
  std::size_t classes = 0;
  std::vector<MultimodalSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::size_t modalities() const { return samples.empty() ? 0 : samples.front().x.size(); }

  // Column-stacked inputs for the given sample indices: one d_v x n matrix per modality.
  std::vector<Eigen::MatrixXd> gather(std::span<const std::size_t> indices) const;
  std::vector<Eigen::MatrixXd> gather_all() const;
  std::vector<int> labels(std::span<const std::size_t> indices) const;
  std::vector<int> labels() const;
};

struct SplitDataset {
  Dataset train;
  Dataset test;
};

SplitDataset generate_dataset(const SyntheticSpec& spec);

// Copy of the dataset keeping only modality v (1-based).
Dataset select_modality(const Dataset& dataset, std::size_t v);

std::vector<std::size_t> class_balance(const Dataset& dataset);

// Columnar text export: first line "# " + dataset spec JSON, then a header row, then
// one row per sample: split,label,m1_0,...,m1_{d1-1},m2_0,...
void export_dataset(std::ostream& out, const SyntheticSpec& spec, const SplitDataset& data);

}  // namespace dmr
