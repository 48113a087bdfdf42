#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "dmr/datasynth.hpp"
#include "dmr/errors.hpp"

using namespace dmr;

namespace {

// Nearest-class-mean probe fitted on train, scored on test, for one modality.
double probe_accuracy(const SplitDataset& data, std::size_t v) {
  const std::size_t M = data.train.classes;
  std::vector<Eigen::VectorXd> means(M, Eigen::VectorXd::Zero(data.train.samples[0].x[v].size()));
  std::vector<double> n(M, 0.0);
  for (const auto& s : data.train.samples) {
    means[s.label - 1] += s.x[v];
    n[s.label - 1] += 1.0;
  }
  for (std::size_t y = 0; y < M; ++y) means[y] /= n[y];
  std::size_t hits = 0;
  for (const auto& s : data.test.samples) {
    std::size_t best = 0;
    for (std::size_t y = 1; y < M; ++y)
      if ((s.x[v] - means[y]).squaredNorm() < (s.x[v] - means[best]).squaredNorm()) best = y;
    hits += static_cast<int>(best) + 1 == s.label;
  }
  return static_cast<double>(hits) / data.test.size();
}

}  // namespace

TEST_CASE("generation is a deterministic function of the dataset spec") {
  SyntheticSpec spec;
  spec.train_size = 30;
  spec.test_size = 20;
  const auto a = generate_dataset(spec), b = generate_dataset(spec);
  REQUIRE(a.train.size() == 30);
  REQUIRE(a.test.size() == 20);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train.samples[i].label == b.train.samples[i].label);
    for (std::size_t v = 0; v < 3; ++v) CHECK(a.train.samples[i].x[v] == b.train.samples[i].x[v]);
  }
  spec.seed = 1;
  const auto c = generate_dataset(spec);
  CHECK(c.train.samples[0].x[0] != a.train.samples[0].x[0]);
}

TEST_CASE("shapes follow the dataset spec and labels are 1-based") {
  SyntheticSpec spec;
  spec.input_dims = {5, 7};
  spec.snr = {0.5, 1.0};
  spec.classes = 3;
  spec.train_size = 12;
  spec.test_size = 9;
  const auto d = generate_dataset(spec);
  CHECK(d.train.modalities() == 2);
  CHECK(d.train.samples[0].x[0].size() == 5);
  CHECK(d.train.samples[0].x[1].size() == 7);
  for (const auto& s : d.train.samples) {
    CHECK(s.label >= 1);
    CHECK(s.label <= 3);
  }
  const auto g = d.test.gather_all();
  CHECK(g[1].rows() == 7);
  CHECK(g[1].cols() == 9);
  CHECK(g[1].col(4) == d.test.samples[4].x[1]);
}

TEST_CASE("classes are balanced to within one sample") {
  for (std::size_t n : {40, 41, 43, 400}) {
    SyntheticSpec spec;
    spec.train_size = n;
    spec.test_size = n;
    const auto d = generate_dataset(spec);
    for (const auto* ds : {&d.train, &d.test}) {
      const auto counts = class_balance(*ds);
      const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
      CHECK(*hi - *lo <= 1);
    }
  }
}

TEST_CASE("train and test splits share no sample") {
  SyntheticSpec spec;
  spec.train_size = 100;
  spec.test_size = 100;
  const auto d = generate_dataset(spec);
  std::set<double> seen;
  for (const auto& s : d.train.samples) seen.insert(s.x[0](0));
  for (const auto& s : d.test.samples) CHECK(seen.count(s.x[0](0)) == 0);
}

TEST_CASE("the additive noise has unit variance") {
  SyntheticSpec spec;
  spec.train_size = 40;
  spec.test_size = 20000;
  const auto d = generate_dataset(spec);
  for (std::size_t v = 0; v < 3; ++v) {
    std::vector<Eigen::VectorXd> mean(4, Eigen::VectorXd::Zero(16));
    std::vector<double> n(4, 0.0);
    for (const auto& s : d.test.samples) {
      mean[s.label - 1] += s.x[v];
      n[s.label - 1] += 1.0;
    }
    for (int y = 0; y < 4; ++y) mean[y] /= n[y];
    double ss = 0.0;
    for (const auto& s : d.test.samples) ss += (s.x[v] - mean[s.label - 1]).squaredNorm();
    CHECK(ss / (20000.0 * 16.0) == doctest::Approx(1.0).epsilon(0.02));
  }
}

TEST_CASE("a linear probe ranks modalities by their SNR") {
  SyntheticSpec spec;
  spec.snr = {0.05, 0.3, 1.0, 3.0};
  spec.input_dims = {16, 16, 16, 16};
  spec.train_size = 800;
  spec.test_size = 4000;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    spec.seed = seed;
    const auto d = generate_dataset(spec);
    double prev = 0.0;
    for (std::size_t v = 0; v < 4; ++v) {
      const double acc = probe_accuracy(d, v);
      CHECK(acc > prev);
      prev = acc;
    }
    // the weakest modality sits near chance, the strongest is near perfect
    CHECK(probe_accuracy(d, 0) < 0.35);
    CHECK(probe_accuracy(d, 3) > 0.9);
  }
}

TEST_CASE("export writes the spec, a header and one row per sample") {
  SyntheticSpec spec;
  spec.input_dims = {2, 1};
  spec.snr = {1.0, 1.0};
  spec.classes = 2;
  spec.train_size = 3;
  spec.test_size = 2;
  const auto d = generate_dataset(spec);
  std::ostringstream out;
  export_dataset(out, spec, d);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("# {", 0) == 0);
  std::getline(in, line);
  CHECK(line == "split,label,m1_0,m1_1,m2_0");
  int train = 0, test = 0;
  while (std::getline(in, line)) {
    train += line.rfind("train,", 0) == 0;
    test += line.rfind("test,", 0) == 0;
  }
  CHECK(train == 3);
  CHECK(test == 2);
}

TEST_CASE("invalid specs are rejected") {
  SyntheticSpec spec;
  spec.snr = {0.1, 0.2};
  CHECK_THROWS_AS(generate_dataset(spec), InvalidInput);
  spec = {};
  spec.snr[1] = 0.0;
  CHECK_THROWS_AS(generate_dataset(spec), InvalidInput);
  spec = {};
  spec.classes = 1;
  CHECK_THROWS_AS(generate_dataset(spec), InvalidInput);
  spec = {};
  spec.train_size = 3;
  CHECK_THROWS_AS(generate_dataset(spec), InvalidInput);
  spec = {};
  spec.input_dims = {};
  spec.snr = {};
  CHECK_THROWS_AS(generate_dataset(spec), InvalidInput);
  CHECK_THROWS_AS(class_balance(Dataset{}), InvalidInput);
}

TEST_CASE("very high SNR makes every single modality almost perfectly separable") {
  SyntheticSpec spec;
  spec.snr = {6.0, 6.0, 6.0};
  spec.test_size = 2000;
  const auto d = generate_dataset(spec);
  for (std::size_t v = 0; v < 3; ++v) CHECK(probe_accuracy(d, v) > 0.95);
}

TEST_CASE("a tiny-SNR modality probes at chance while the others do not") {
  SyntheticSpec spec;
  spec.snr = {1e-3, 2.0, 2.0};
  spec.test_size = 4000;
  const auto d = generate_dataset(spec);
  const double bound = 4.0 * std::sqrt(0.25 * 0.75 / 4000.0);
  CHECK(std::abs(probe_accuracy(d, 0) - 0.25) < bound);
  CHECK(probe_accuracy(d, 1) > 0.6);
}

TEST_CASE("class_balance reference counts") {
  SyntheticSpec spec;
  spec.classes = 3;
  spec.train_size = 9;
  spec.test_size = 5;
  CHECK(class_balance(generate_dataset(spec).train) == std::vector<std::size_t>{3, 3, 3});
  spec.classes = 2;
  const auto two = class_balance(generate_dataset(spec).test);
  CHECK(((two == std::vector<std::size_t>{3, 2}) || (two == std::vector<std::size_t>{2, 3})));
  spec = {};
  const auto d = generate_dataset(spec);
  const auto counts = class_balance(d.train);
  CHECK(std::accumulate(counts.begin(), counts.end(), std::size_t{0}) == d.train.size());
}

TEST_CASE("select_modality keeps one modality and the labels") {
  SyntheticSpec spec;
  spec.input_dims = {3, 5, 7};
  spec.train_size = 12;
  const auto d = generate_dataset(spec);
  const auto m2 = select_modality(d.train, 2);
  REQUIRE(m2.size() == d.train.size());
  CHECK(m2.modalities() == 1);
  CHECK(m2.classes == d.train.classes);
  for (std::size_t i = 0; i < m2.size(); ++i) {
    CHECK(m2.samples[i].label == d.train.samples[i].label);
    CHECK(m2.samples[i].x[0] == d.train.samples[i].x[1]);
  }
  CHECK_THROWS_AS(select_modality(d.train, 0), InvalidInput);
  CHECK_THROWS_AS(select_modality(d.train, 4), InvalidInput);
}
