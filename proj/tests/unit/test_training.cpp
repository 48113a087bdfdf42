#include <cmath>
#include <sstream>

#include "doctest.h"
#include "dmr/config.hpp"
#include "dmr/errors.hpp"
#include "dmr/optimizer.hpp"
#include "dmr/trainer.hpp"

using namespace dmr;

namespace {

ExperimentConfig short_config(TrainingMode mode) {
  auto c = standard_config();
  c.mode = mode;
  c.epochs = 4;
  c.hcr_warmup = 2;
  c.data.train_size = 96;
  c.data.test_size = 100;
  return c;
}

bool same_losses(const RunRecord& a, const RunRecord& b) {
  if (a.steps.size() != b.steps.size()) return false;
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    const auto &x = a.steps[i].loss, &y = b.steps[i].loss;
    if (x.l_ttl != y.l_ttl || x.l_dr != y.l_dr || x.l_hcr != y.l_hcr || x.total != y.total) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("learning rate follows warm-up and milestones") {
  OptimizerConfig o;
  o.learning_rate = 0.1;
  o.warmup_epochs = 4;
  o.milestones = {6, 8};
  o.decay = 0.5;
  CHECK(learning_rate_at(o, 0) == doctest::Approx(0.025));
  CHECK(learning_rate_at(o, 3) == doctest::Approx(0.1));
  CHECK(learning_rate_at(o, 5) == doctest::Approx(0.1));
  CHECK(learning_rate_at(o, 6) == doctest::Approx(0.05));
  CHECK(learning_rate_at(o, 9) == doctest::Approx(0.025));
}

TEST_CASE("SGD with momentum and weight decay matches the recurrence") {
  auto c = tiny_config();
  RandomSource rng(0, Stream::init);
  auto params = init_parameters(c.model_config(), rng);
  const auto start = params;
  auto grads = zeros_like(params);
  grads.classifier.setConstant(0.5);
  auto state = make_optimizer_state(params);
  OptimizerConfig o;
  o.momentum = 0.9;
  o.weight_decay = 0.1;
  sgd_step(params, grads, state, o, 0.2);
  sgd_step(params, grads, state, o, 0.2);
  const double w0 = start.classifier(0, 0);
  const double v1 = 0.5 + 0.1 * w0;
  const double w1 = w0 - 0.2 * v1;
  const double v2 = 0.9 * v1 + 0.5 + 0.1 * w1;
  CHECK(params.classifier(0, 0) == doctest::Approx(w1 - 0.2 * v2).epsilon(1e-14));
  CHECK(state.step == 2);
  // running statistics are not touched by the optimizer
  CHECK(params.mu_head.running_var == start.mu_head.running_var);
}

TEST_CASE("training is deterministic for a fixed config") {
  const auto c = short_config(TrainingMode::dmr_hcr);
  const auto a = train(c), b = train(c);
  CHECK(same_losses(a.record, b.record));
  REQUIRE(a.record.results.has_value());
  std::ostringstream ra, rb;
  write_results_csv(ra, *a.record.results);
  write_results_csv(rb, *b.record.results);
  CHECK(ra.str() == rb.str());

  auto other = c;
  other.seed = 1;
  CHECK_FALSE(same_losses(a.record, train(other).record));
}

TEST_CASE("zero noise with zero weights reproduces the vanilla loss stream bitwise") {
  auto van = short_config(TrainingMode::vanilla);
  van.epochs = 1;
  auto deg = van;
  deg.mode = TrainingMode::dmr_hcr;
  deg.alpha = 0.0;
  deg.beta = 0.0;
  deg.disable_sampling_noise = true;
  const auto a = train(van), b = train(deg);
  REQUIRE_FALSE(a.record.steps.empty());
  CHECK(same_losses(a.record, b.record));
  CHECK(a.state.params.classifier == b.state.params.classifier);
}

TEST_CASE("sampling noise changes the stream") {
  auto van = short_config(TrainingMode::vanilla);
  van.epochs = 1;
  auto dmr = van;
  dmr.mode = TrainingMode::dmr;
  dmr.alpha = 0.0;
  CHECK_FALSE(same_losses(train(van).record, train(dmr).record));
}

TEST_CASE("the hard set appears only after the warm-up") {
  const auto r = train(short_config(TrainingMode::dmr_hcr), TrainOptions{.evaluate = false});
  REQUIRE(r.record.epochs.size() == 4);
  CHECK_FALSE(r.record.epochs[0].hard_for_next.has_value());
  REQUIRE(r.record.epochs[1].hard_for_next.has_value());
  CHECK(r.record.epochs[1].hard_for_next->indices.size() == 3);
  CHECK(r.record.epochs[1].hard_for_next->epoch_of_selection == 2);
  for (const auto& s : r.record.steps) {
    if (s.epoch < 2) CHECK_FALSE(s.hard.has_value());
    else CHECK(s.hard.has_value());
  }
  CHECK(r.record.results == std::nullopt);

  // the selection is the top-V of the recorded d_j of that epoch
  const auto& e = r.record.epochs[2];
  CHECK(*e.hard_for_next == select_hard_set(e.variances, 3, 3));
}

TEST_CASE("vanilla and dmr never carry a hard set") {
  for (auto mode : {TrainingMode::vanilla, TrainingMode::dmr}) {
    const auto r = train(short_config(mode), TrainOptions{.evaluate = false});
    for (const auto& s : r.record.steps) {
      CHECK_FALSE(s.hard.has_value());
      CHECK(s.loss.l_hcr == 0.0);
    }
  }
}

TEST_CASE("a huge learning rate raises a divergence error") {
  auto c = short_config(TrainingMode::dmr);
  c.optimizer.learning_rate = 1e300;
  CHECK_THROWS_AS(train(c), DivergenceError);
}

TEST_CASE("a strong regularizer pulls sigma squared toward one") {
  auto c = short_config(TrainingMode::dmr);
  c.alpha = 0.0;
  const double free = final_mean_variance(train(c, TrainOptions{.evaluate = false}).record);
  c.alpha = 5.0;
  const double pulled = final_mean_variance(train(c, TrainOptions{.evaluate = false}).record);
  CHECK(std::abs(pulled - 1.0) < std::abs(free - 1.0));
}

TEST_CASE("stopping and resuming matches an uninterrupted run") {
  const auto c = short_config(TrainingMode::dmr_hcr);
  const auto data = generate_dataset(c.data);
  const auto full = train(c, data);
  auto first = train(c, data, TrainOptions{.stop_after_epoch = 2});
  CHECK(first.state.next_epoch == 2);
  CHECK_FALSE(first.record.results.has_value());
  const auto rest = resume(c, data, first.state);
  auto joined = first.record;
  joined.steps.insert(joined.steps.end(), rest.record.steps.begin(), rest.record.steps.end());
  CHECK(same_losses(joined, full.record));
  CHECK(rest.state.params.classifier == full.state.params.classifier);
}

TEST_CASE("log writers emit the documented columns") {
  StepRecord s;
  s.step = 3;
  s.epoch = 1;
  s.loss.total = 1.5;
  s.hard = HardSet{{1, 2}, 1};
  std::ostringstream j;
  write_step_jsonl(j, "abc", s);
  const auto parsed = nlohmann::json::parse(j.str());
  CHECK(parsed.at("config_hash") == "abc");
  CHECK(parsed.at("step") == 3);
  CHECK(parsed.at("hard_set") == nlohmann::json{1, 2});

  EpochRecord e;
  e.epoch = 4;
  e.variances = {{1, 0.5}, {3, 0.25}};
  e.counts = {0, 10, 0, 20};
  e.hard_for_next = HardSet{{1, 3}, 5};
  std::ostringstream m;
  write_mining_csv_header(m);
  write_mining_csv_rows(m, e, 2);
  CHECK(m.str() ==
        "epoch,index,bits,d_j,elements,in_hard_set\n"
        "4,1,10,0.5,10,1\n"
        "4,2,01,,0,0\n"
        "4,3,11,0.25,20,1\n");
}

TEST_CASE("one epoch twice gives identical final parameters") {
  auto c = short_config(TrainingMode::dmr_hcr);
  c.epochs = 1;
  const auto a = train(c, TrainOptions{.evaluate = false}), b = train(c, TrainOptions{.evaluate = false});
  const auto va = parameter_views(a.state.params), vb = parameter_views(b.state.params);
  for (std::size_t i = 0; i < va.size(); ++i)
    for (std::size_t k = 0; k < va[i].size(); ++k) CHECK(va[i].data[k] == vb[i].data[k]);
}

TEST_CASE("without the regularizer sigma squared ends larger than at the default alpha") {
  auto c = short_config(TrainingMode::dmr);
  c.epochs = 10;
  c.alpha = 0.0;
  const double free = final_mean_variance(train(c, TrainOptions{.evaluate = false}).record);
  c.alpha = 1e-3;
  const double reg = final_mean_variance(train(c, TrainOptions{.evaluate = false}).record);
  CHECK(free > reg);
}

TEST_CASE("a unimodal baseline trains on the selected modality only") {
  auto c = short_config(TrainingMode::dmr_hcr);
  c.unimodal = 2;
  c.dropout = DropoutPolicy::uniform_nonempty(1);
  const auto r = train(c);
  REQUIRE(r.record.results.has_value());
  CHECK(r.record.results->rows.size() == 1);
  CHECK(r.state.params.encoders.size() == 1);
  CHECK(r.state.params.encoders[0].layers.front().weight.cols() ==
        static_cast<Eigen::Index>(c.data.input_dims[1]));
  // only one combination exists, so it is always the hard set
  CHECK(r.record.epochs.back().hard_for_next->indices == std::vector<CombinationIndex>{1});
}
