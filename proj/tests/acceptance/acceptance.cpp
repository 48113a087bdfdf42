// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "dmr/checkpoint.hpp"
#include "dmr/combinations.hpp"
#include "dmr/config.hpp"
#include "dmr/gradcheck.hpp"
#include "dmr/losses.hpp"
#include "dmr/metrics.hpp"
#include "dmr/trainer.hpp"

using namespace dmr;

namespace {

constexpr int kSeeds = 10;
constexpr int kRequired = 8;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> body;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ExperimentConfig seeded(TrainingMode mode, int s) {
  auto c = standard_config();
  c.mode = mode;
  c.seed = static_cast<std::uint64_t>(s);
  c.data.seed = static_cast<std::uint64_t>(s);
  return c;
}

// ---------------------------------------------------------------------------

Outcome kl_oracle() {
  RandomSource rng(2024);
  const Eigen::Index C = 2, S = 2;
  const int draws = 1000000;
  int within = 0;
  double worst = 0.0;
  for (int m = 0; m < 100; ++m) {
    FeatureMap mu(C, S), ls(C, S);
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
      mu.data()[i] = rng.normal();
      ls.data()[i] = 0.5 * rng.normal();
    }
    const double closed = distribution_regularizer(mu, ls);
    // per draw: mean over elements of log q(x) - log p(x), x ~ q
    double sum = 0.0, sum2 = 0.0;
    for (int d = 0; d < draws; ++d) {
      double l = 0.0;
      for (Eigen::Index i = 0; i < mu.size(); ++i) {
        const double e = rng.normal();
        const double x = mu.data()[i] + std::exp(ls.data()[i]) * e;
        l += -ls.data()[i] - 0.5 * e * e + 0.5 * x * x;
      }
      l /= static_cast<double>(mu.size());
      sum += l;
      sum2 += l * l;
    }
    const double mean = sum / draws;
    const double se = std::sqrt((sum2 / draws - mean * mean) / draws);
    const double z = std::abs(closed - mean) / se;
    worst = std::max(worst, z);
    within += z < 3.0;
  }
  const double zero = distribution_regularizer(FeatureMap::Zero(C, S), FeatureMap::Zero(C, S));
  return {within == 100 && zero == 0.0,
          fmt("%d/100 maps within 3 SE (worst %.2f SE), KL(N(0,1)) = %g", within, worst, zero)};
}

Outcome gradient_check_all() {
  double worst = 0.0;
  bool pass = true;
  std::string where;
  for (auto mode : {TrainingMode::dmr_hcr, TrainingMode::dmr, TrainingMode::vanilla}) {
    for (double alpha : {1e-3, 0.5}) {
      auto c = tiny_config();
      c.mode = mode;
      c.alpha = alpha;
      c.beta = 0.7;
      const auto r = gradient_check(c, 1e-4);
      pass = pass && r.passed;
      for (const auto& g : r.groups)
        if (g.max_relative_error > worst) {
          worst = g.max_relative_error;
          where = to_string(mode) + "/" + g.group;
        }
    }
  }
  return {pass, fmt("max relative error %.2e (%s), tolerance 1e-4", worst, where.c_str())};
}

Outcome degeneracy() {
  auto van = seeded(TrainingMode::vanilla, 0);
  van.epochs = 1;
  auto deg = van;
  deg.mode = TrainingMode::dmr_hcr;
  deg.alpha = 0.0;
  deg.beta = 0.0;
  deg.disable_sampling_noise = true;
  const auto a = train(van, TrainOptions{.evaluate = false});
  const auto b = train(deg, TrainOptions{.evaluate = false});
  std::size_t equal = 0;
  const std::size_t n = a.record.steps.size();
  for (std::size_t i = 0; i < std::min(n, b.record.steps.size()); ++i) {
    const auto &x = a.record.steps[i].loss, &y = b.record.steps[i].loss;
    equal += x.total == y.total && x.l_ttl == y.l_ttl;
  }
  return {n > 0 && n == b.record.steps.size() && equal == n, fmt("%zu/%zu steps bitwise equal", equal, n)};
}

Outcome mask_algebra() {
  bool ok = true;
  std::size_t checked = 0;
  for (std::size_t V = 1; V <= 8; ++V)
    for (CombinationIndex j = 1; j <= combination_count(V); ++j) {
      const auto m = index_to_mask(j, V);
      std::uint64_t brute = 0;
      for (std::size_t k = 0; k < V; ++k) brute += static_cast<std::uint64_t>(m.bits()[k]) << k;
      ok = ok && brute == j && mask_to_index(m) == j && CombinationMask::from_bitstring(m.bitstring()) == m;
      ++checked;
    }
  RandomSource rng(7, Stream::masks);
  const auto policy = DropoutPolicy::uniform_nonempty(3);
  std::array<int, 8> counts{};
  const int draws = 70000;
  for (int i = 0; i < draws; ++i) ++counts[sample_dropout_mask(policy, rng).index()];
  double worst = 0.0;
  for (int j = 1; j <= 7; ++j) worst = std::max(worst, std::abs(counts[j] / double(draws) - 1.0 / 7.0));
  ok = ok && counts[0] == 0 && worst <= 0.01;
  return {ok, fmt("%zu masks round-trip, max frequency deviation %.4f (limit 0.01)", checked, worst)};
}

// ---------------------------------------------------------------------------
// Shared training runs for the comparative criteria.

struct SeedRuns {
  double vanilla = 0.0, dmr = 0.0, hcr = 0.0;
  std::optional<HardSet> first_hard;
  VarianceMap first_variances;
  double intra_vanilla = 0.0, inter_vanilla = 0.0, intra_dmr = 0.0, inter_dmr = 0.0;
};

std::pair<double, double> diversity(const ModelParameters& params, const ExperimentConfig& c, const Dataset& test) {
  const auto m = c.model_config();
  const auto V = m.modalities();
  double intra = 0.0, inter = 0.0;
  int ni = 0, ne = 0;
  for (std::size_t a = 1; a <= V; ++a)
    for (std::size_t b = a; b <= V; ++b) {
      const double d = modality_diversity(params, m, test, a, b, 40).mean;
      if (a == b) {
        intra += d;
        ++ni;
      } else {
        inter += d;
        ++ne;
      }
    }
  return {intra / ni, ne ? inter / ne : 0.0};
}

std::vector<SeedRuns> g_runs;

void ensure_runs() {
  if (!g_runs.empty()) return;
  for (int s = 0; s < kSeeds; ++s) {
    SeedRuns r;
    const auto cv = seeded(TrainingMode::vanilla, s), cd = seeded(TrainingMode::dmr, s),
               ch = seeded(TrainingMode::dmr_hcr, s);
    const auto data = generate_dataset(cv.data);
    const auto v = train(cv, data), d = train(cd, data), h = train(ch, data);
    r.vanilla = v.record.results->average;
    r.dmr = d.record.results->average;
    r.hcr = h.record.results->average;
    for (const auto& e : h.record.epochs)
      if (e.hard_for_next) {
        r.first_hard = e.hard_for_next;
        r.first_variances = e.variances;
        break;
      }
    std::tie(r.intra_vanilla, r.inter_vanilla) = diversity(v.state.params, cv, data.test);
    std::tie(r.intra_dmr, r.inter_dmr) = diversity(d.state.params, cd, data.test);
    std::printf("  seed %d  vanilla %.4f  dmr %.4f  dmr+hcr %.4f  H", s, r.vanilla, r.dmr, r.hcr);
    if (r.first_hard)
      for (auto j : r.first_hard->indices) std::printf(" %u", j);
    std::printf("  D intra/inter vanilla %.4f/%.4f dmr %.4f/%.4f\n", r.intra_vanilla, r.inter_vanilla,
                r.intra_dmr, r.inter_dmr);
    std::fflush(stdout);
    g_runs.push_back(r);
  }
}

Outcome table3_direction() {
  ensure_runs();
  int a = 0, b = 0;
  double sv = 0, sd = 0, sh = 0;
  for (const auto& r : g_runs) {
    a += r.dmr >= r.vanilla + 0.02;
    b += r.hcr >= r.dmr;
    sv += r.vanilla;
    sd += r.dmr;
    sh += r.hcr;
  }
  return {a >= kRequired && b >= kRequired,
          fmt("dmr >= vanilla + 2 pts in %d/10, dmr+hcr >= dmr in %d/10 (means %.4f / %.4f / %.4f)", a, b,
              sv / kSeeds, sd / kSeeds, sh / kSeeds)};
}

Outcome table5_direction() {
  int mono = 0;
  std::array<double, 4> mean{};
  const std::array<double, 4> alphas{0.0, 1e-4, 1e-3, 1e-2};
  for (int s = 0; s < kSeeds; ++s) {
    auto c = seeded(TrainingMode::dmr, s);
    const auto data = generate_dataset(c.data);
    double prev = INFINITY;
    bool ok = true;
    std::printf("  seed %d  sigma^2:", s);
    for (std::size_t k = 0; k < alphas.size(); ++k) {
      c.alpha = alphas[k];
      const double s2 = final_mean_variance(train(c, data, TrainOptions{.evaluate = false}).record);
      std::printf(" %.4f", s2);
      mean[k] += s2 / kSeeds;
      ok = ok && s2 <= prev;
      prev = s2;
    }
    std::printf("%s\n", ok ? "" : "  (not monotone)");
    mono += ok;
  }
  return {mono >= kRequired, fmt("weakly decreasing in %d/10 seeds (mean sigma^2 %.3f %.3f %.3f %.3f)", mono,
                                 mean[0], mean[1], mean[2], mean[3])};
}

Outcome hard_mining() {
  ensure_runs();
  // modality 1 is the injected low-SNR one; "100" is the only combination made of it alone
  const CombinationIndex weak_only = CombinationMask::from_bitstring("100").index();
  int hits = 0;
  double rank_sum = 0.0;
  for (const auto& r : g_runs) {
    if (!r.first_hard) continue;
    hits += r.first_hard->contains(weak_only);
    int rank = 1;
    for (const auto& [j, v] : r.first_variances) rank += v > r.first_variances.at(weak_only);
    rank_sum += rank;
  }
  return {hits >= kRequired, fmt("index %u in the first post-warm-up H in %d/10 seeds (mean variance rank %.1f of 7)",
                                 weak_only, hits, rank_sum / kSeeds)};
}

Outcome diversity_direction() {
  ensure_runs();
  int both = 0;
  for (const auto& r : g_runs) both += r.intra_dmr > r.intra_vanilla && r.inter_dmr > r.inter_vanilla;

  // unit properties on random maps
  RandomSource rng(99);
  bool props = true;
  for (int t = 0; t < 50; ++t) {
    FeatureMap f(6, 5), g(4, 5);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    const auto d = channel_distance(f, f, ChannelScope::intra).values;
    props = props && d.diagonal().isZero(0.0) && d == d.transpose();
    const auto e = channel_distance(f, g, ChannelScope::inter).values;
    const auto es = channel_distance(4.0 * f, 0.25 * g, ChannelScope::inter).values;
    props = props && (e - es).cwiseAbs().maxCoeff() < 1e-12;
  }
  return {both >= kRequired && props,
          fmt("dmr exceeds vanilla on intra and inter D_channel in %d/10 seeds; unit properties %s", both,
              props ? "hold" : "FAIL")};
}

Outcome determinism() {
  auto c = seeded(TrainingMode::dmr_hcr, 3);
  c.epochs = 12;
  const auto data = generate_dataset(c.data);
  auto metrics_bytes = [&](const TrainResult& r) {
    std::ostringstream out;
    write_results_csv(out, *r.record.results);
    write_mining_csv_header(out);
    for (const auto& e : r.record.epochs) write_mining_csv_rows(out, e, 3);
    for (const auto& s : r.record.steps) write_step_jsonl(out, r.record.config_hash, s);
    return out.str();
  };
  const auto a = train(c, data), b = train(c, data);
  const bool same_metrics = metrics_bytes(a) == metrics_bytes(b);

  const auto part = train(c, data, TrainOptions{.stop_after_epoch = 5});
  const auto bytes = serialize_checkpoint(c, part.state);
  const auto ck = deserialize_checkpoint(bytes);
  const bool round_trip = serialize_checkpoint(ck.config, ck.state) == bytes;

  const auto rest = resume(ck.config, data, ck.state);
  bool same_stream = part.record.steps.size() + rest.record.steps.size() == a.record.steps.size();
  for (std::size_t i = 0; same_stream && i < a.record.steps.size(); ++i) {
    const auto& s = i < part.record.steps.size() ? part.record.steps[i]
                                                 : rest.record.steps[i - part.record.steps.size()];
    same_stream = s.loss.total == a.record.steps[i].loss.total;
  }
  same_stream = same_stream && rest.record.results->average == a.record.results->average;
  return {same_metrics && round_trip && same_stream,
          fmt("metrics files identical: %s; checkpoint round-trip identical: %s; resumed loss stream identical: %s",
              same_metrics ? "yes" : "no", round_trip ? "yes" : "no", same_stream ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "KL oracle", 60, kl_oracle},
      {2, "gradient check", 60, gradient_check_all},
      {3, "degeneracy equivalence", 60, degeneracy},
      {4, "mask algebra", 30, mask_algebra},
      {5, "combination accuracy direction", 20 * 60, table3_direction},
      {6, "sigma^2 versus alpha", 30 * 60, table5_direction},
      {7, "hard-mining recovery", 20 * 60, hard_mining},
      {8, "diversity direction", 20 * 60 + 5 * 60, diversity_direction},
      {9, "determinism and persistence", 5 * 60, determinism},
  };
  std::vector<std::string> lines;
  int failures = 0;
  for (const auto& c : criteria) {
    std::printf("[%d] %s\n", c.id, c.name);
    std::fflush(stdout);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    // shared training runs are charged to the first criterion that needs them
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = seconds <= c.budget_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    lines.push_back(fmt("%s criterion %d (%s): %s [%.1f s, budget %.0f s%s]", pass ? "PASS" : "FAIL", c.id, c.name,
                        o.detail.c_str(), seconds, c.budget_seconds, in_time ? "" : ", over budget"));
    std::printf("%s\n", lines.back().c_str());
    std::fflush(stdout);
  }
  std::printf("\nsummary\n");
  for (const auto& l : lines) std::printf("%s\n", l.c_str());
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
