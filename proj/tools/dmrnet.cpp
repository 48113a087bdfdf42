// dmrnet: command-line harness for training, evaluation, mining, sweeps,
// gradient checks and dataset export.
//
// Every leaf of the experiment config is exposed as a flag named after its
// dotted key (--alpha, --model.channels, --data.snr 0.05,0.35,0.35, ...).
// Precedence is flag > --config file > built-in default.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dmr/checkpoint.hpp"
#include "dmr/config.hpp"
#include "dmr/errors.hpp"
#include "dmr/gradcheck.hpp"
#include "dmr/sweep.hpp"
#include "dmr/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit : int { ok = 0, failure = 1, invalid_config = 2, diverged = 3, integrity = 4 };

void flatten(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object())
      flatten(v, key, out);
    else
      out[key] = v;
  }
}

// Interprets a flag value with the type of the default it replaces.
json parse_flag_value(const std::string& text, const json& like) {
  if (like.is_string()) return text;
  try {
    if (like.is_array()) return json::parse("[" + text + "]");
    return json::parse(text);
  } catch (const json::exception&) {
    throw dmr::ConfigError("cannot parse value '" + text + "'");
  }
}

// Collects the config-mirroring flags of one subcommand.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;
  std::map<std::string, json> defaults;

  void attach(CLI::App* app, const dmr::ExperimentConfig& base) {
    app->add_option("--config", file, "JSON config file");
    flatten(dmr::config_to_json(base), "", defaults);
    for (const auto& [key, like] : defaults) {
      std::string hint = like.is_array() ? "comma-separated list" : like.type_name();
      app->add_option("--" + key, values[key], "config key " + key + " (" + hint + ")");
    }
  }

  dmr::ExperimentConfig resolve(const CLI::App* app, const dmr::ExperimentConfig& base) const {
    dmr::ExperimentConfig c = base;
    if (!file.empty()) {
      std::ifstream in(file);
      if (!in) throw dmr::ConfigError("cannot open config file " + file);
      json j;
      try {
        j = json::parse(in);
      } catch (const json::exception& e) {
        throw dmr::ConfigError("config file " + file + ": " + e.what());
      }
      c = dmr::config_from_json(j, base);
    }
    for (const auto& [key, text] : values)
      if (app->count("--" + key) > 0) c = dmr::with_override(c, key, parse_flag_value(text, defaults.at(key)));
    c.validate();
    return c;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

json run_json(const dmr::ExperimentConfig& config, const dmr::RunRecord& rec) {
  json j{{"config_hash", rec.config_hash},
         {"seed", rec.seed},
         {"config", dmr::config_to_json(config)},
         {"steps", rec.steps.size()},
         {"epochs", rec.epochs.size()},
         {"final_mean_sigma2", rec.epochs.empty() ? 0.0 : rec.epochs.back().mean_variance},
         {"wall_clock_seconds", rec.wall_clock_seconds}};
  if (rec.results) j["average_" + dmr::to_string(rec.results->kind)] = rec.results->average;
  return j;
}

void print_table(const dmr::CombinationResultTable& t) {
  for (const auto& r : t.rows) std::printf("  %2u  %s  %.4f\n", r.index, r.bits.c_str(), r.metric);
  std::printf("  average     %.4f\n", t.average);
}

// train and mine share this loop; mine skips evaluation and the checkpoint.
int run_training(const dmr::ExperimentConfig& config, const fs::path& out_dir, const std::string& resume_from,
                 std::optional<int> stop_after, bool mine_only) {
  fs::create_directories(out_dir);
  const auto data = dmr::experiment_data(config);
  const auto hash = dmr::config_hash(config);

  dmr::TrainingState state = dmr::initial_state(config);
  const bool resuming = !resume_from.empty();
  if (resuming) {
    auto ckpt = dmr::load_checkpoint(resume_from);
    dmr::require_same_config(ckpt, config);
    state = std::move(ckpt.state);
  }

  const auto mode = resuming ? std::ios::app : std::ios::trunc;
  std::ofstream steps(out_dir / "steps.jsonl", std::ios::binary | mode);
  std::ofstream mining(out_dir / "mining.csv", std::ios::binary | mode);
  if (!resuming) dmr::write_mining_csv_header(mining);

  dmr::TrainOptions opts;
  opts.stop_after_epoch = stop_after;
  opts.evaluate = !mine_only;
  opts.on_step = [&](const dmr::StepRecord& s) { dmr::write_step_jsonl(steps, hash, s); };
  opts.on_epoch = [&](const dmr::EpochRecord& e) {
    dmr::write_mining_csv_rows(mining, e, config.modalities());
    std::string h = e.hard_for_next ? "" : "-";
    if (e.hard_for_next)
      for (auto j : e.hard_for_next->indices) h += (h.empty() ? "" : ",") + std::to_string(j);
    std::fprintf(stderr, "epoch %d  lr %.4g  mean sigma2 %.4f  H {%s}\n", e.epoch, e.learning_rate,
                 e.mean_variance, h.c_str());
  };

  auto result = dmr::resume(config, data, std::move(state), opts);
  steps.flush();
  mining.flush();

  if (!mine_only) dmr::save_checkpoint(out_dir / "checkpoint.bin", config, result.state);
  if (result.record.results) {
    std::ofstream csv(out_dir / "results.csv", std::ios::binary);
    dmr::write_results_csv(csv, *result.record.results);
    print_table(*result.record.results);
  }
  write_text(out_dir / "config.json", dmr::config_to_json(config).dump(2) + "\n");
  write_text(out_dir / "run.json", run_json(config, result.record).dump(2) + "\n");
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decoupled multimodal representation training harness"};
  app.require_subcommand(1);

  const auto standard = dmr::standard_config();
  const auto tiny = dmr::tiny_config();

  // train
  ConfigFlags train_flags;
  std::string train_out = "run", train_resume;
  int train_stop = -1;
  auto* train_cmd = app.add_subcommand("train", "train a model and write logs, results and a checkpoint");
  train_flags.attach(train_cmd, standard);
  train_cmd->add_option("--out", train_out, "output directory");
  train_cmd->add_option("--resume", train_resume, "checkpoint to continue from");
  train_cmd->add_option("--stop-after-epoch", train_stop, "stop once this many epochs are complete");

  // eval
  ConfigFlags eval_flags;
  std::string eval_ckpt, eval_out, eval_split = "test", eval_metric;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on every modality combination");
  eval_flags.attach(eval_cmd, standard);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--split", eval_split, "train or test")->check(CLI::IsMember({"train", "test"}));
  eval_cmd->add_option("--as", eval_metric, "accuracy or acer (default: metric of the config)");
  eval_cmd->add_option("--out", eval_out, "results CSV (default stdout)");

  // diversity
  std::string div_ckpt, div_out = "diversity", div_metric = "cosine", div_split = "test";
  std::vector<std::string> div_pairs;
  std::size_t div_bins = 40;
  auto* div_cmd = app.add_subcommand("diversity", "channel-distance histograms for modality pairs");
  div_cmd->add_option("--checkpoint", div_ckpt, "checkpoint file")->required();
  div_cmd->add_option("--pair", div_pairs, "modality pair m,n (1-based); m==n gives intra-modality")->required();
  div_cmd->add_option("--bins", div_bins, "histogram bins over [0, 2]");
  div_cmd->add_option("--channel-metric", div_metric, "cosine or literal");
  div_cmd->add_option("--split", div_split, "train or test")->check(CLI::IsMember({"train", "test"}));
  div_cmd->add_option("--out", div_out, "output directory");

  // mine
  ConfigFlags mine_flags;
  std::string mine_out = "mine";
  auto* mine_cmd = app.add_subcommand("mine", "train and dump per-epoch combination variances and hard sets");
  mine_flags.attach(mine_cmd, standard);
  mine_cmd->add_option("--out", mine_out, "output directory");

  // sweep
  ConfigFlags sweep_flags;
  std::vector<std::string> sweep_grid;
  std::size_t sweep_replicates = 1;
  std::string sweep_out = "sweep.csv";
  auto* sweep_cmd = app.add_subcommand("sweep", "grid sweep over config keys");
  sweep_flags.attach(sweep_cmd, standard);
  sweep_cmd->add_option("--grid", sweep_grid, "axis key=v1,v2,... (repeatable)")->required();
  sweep_cmd->add_option("--replicates", sweep_replicates, "seeds per grid point");
  sweep_cmd->add_option("--out", sweep_out, "aggregated CSV");

  // gradcheck
  ConfigFlags gc_flags;
  double gc_tol = 1e-4;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of the analytic gradients");
  gc_flags.attach(gc_cmd, tiny);
  gc_cmd->add_option("--tolerance", gc_tol, "maximum relative error per parameter group");

  // export-data
  ConfigFlags ex_flags;
  std::string ex_out = "dataset.csv";
  auto* ex_cmd = app.add_subcommand("export-data", "write the synthetic dataset as CSV");
  ex_flags.attach(ex_cmd, standard);
  ex_cmd->add_option("--out", ex_out, "output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ok : invalid_config;
  }

  try {
    if (*train_cmd) {
      const auto cfg = train_flags.resolve(train_cmd, standard);
      return run_training(cfg, train_out, train_resume, train_stop >= 0 ? std::optional<int>(train_stop) : std::nullopt,
                          false);
    }
    if (*mine_cmd) return run_training(mine_flags.resolve(mine_cmd, standard), mine_out, "", std::nullopt, true);

    if (*eval_cmd) {
      auto ckpt = dmr::load_checkpoint(eval_ckpt);
      const bool has_config = !eval_flags.file.empty() ||
                              std::any_of(eval_flags.values.begin(), eval_flags.values.end(),
                                          [&](const auto& kv) { return eval_cmd->count("--" + kv.first) > 0; });
      dmr::ExperimentConfig cfg = ckpt.config;
      if (has_config) {
        cfg = eval_flags.resolve(eval_cmd, standard);
        dmr::require_same_config(ckpt, cfg);
      }
      const auto kind = eval_metric.empty() ? cfg.metric : dmr::metric_kind_from_string(eval_metric);
      const auto data = dmr::experiment_data(cfg);
      const auto table = dmr::evaluate(cfg, ckpt.state.params, eval_split == "train" ? data.train : data.test, kind);
      if (eval_out.empty()) {
        dmr::write_results_csv(std::cout, table);
      } else {
        std::ofstream out(eval_out, std::ios::binary);
        dmr::write_results_csv(out, table);
        print_table(table);
      }
      return ok;
    }

    if (*div_cmd) {
      const auto ckpt = dmr::load_checkpoint(div_ckpt);
      const auto& cfg = ckpt.config;
      const auto data = dmr::experiment_data(cfg);
      const auto metric = dmr::channel_metric_from_string(div_metric);
      fs::create_directories(div_out);
      std::ofstream summary(fs::path(div_out) / "summary.csv", std::ios::binary);
      summary << "modality_m,modality_n,scope,mean,samples,skipped\n";
      for (const auto& pair : div_pairs) {
        std::size_t m = 0, n = 0;
        char sep = 0;
        std::istringstream in(pair);
        if (!(in >> m >> sep >> n) || sep != ',') throw dmr::ConfigError("bad --pair '" + pair + "'");
        const auto d = dmr::modality_diversity(ckpt.state.params, cfg.model_config(),
                                               div_split == "train" ? data.train : data.test, m, n, div_bins, metric);
        std::ofstream h(fs::path(div_out) / ("hist_" + std::to_string(m) + "_" + std::to_string(n) + ".csv"),
                        std::ios::binary);
        dmr::write_histogram_csv(h, d.histogram);
        const json sidecar{{"modality_m", m},
                           {"modality_n", n},
                           {"scope", m == n ? "intra" : "inter"},
                           {"channel_metric", dmr::to_string(metric)},
                           {"split", div_split},
                           {"bins", div_bins},
                           {"mean", d.mean},
                           {"entries", d.histogram.total},
                           {"samples", d.samples},
                           {"skipped", d.skipped}};
        std::ofstream(fs::path(div_out) / ("hist_" + std::to_string(m) + "_" + std::to_string(n) + ".json"),
                      std::ios::binary)
            << sidecar.dump(2) << '\n';
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.10g", d.mean);
        summary << m << ',' << n << ',' << (m == n ? "intra" : "inter") << ',' << buf << ',' << d.samples << ','
                << d.skipped << '\n';
        std::printf("pair %zu,%zu  mean D_channel %.4f  (%zu samples, %zu skipped)\n", m, n, d.mean, d.samples,
                    d.skipped);
      }
      return ok;
    }

    if (*sweep_cmd) {
      const auto base = sweep_flags.resolve(sweep_cmd, standard);
      std::vector<dmr::GridAxis> grid;
      for (const auto& g : sweep_grid) grid.push_back(dmr::parse_grid_axis(g));
      const auto results = dmr::sweep(base, grid, sweep_replicates, [](const dmr::SweepResult& r) {
        std::fprintf(stderr, "%s  replicate %zu  %s  sigma2 %.4f  metric %.4f\n", r.point.label().c_str(),
                     r.point.replicate, r.status.c_str(), r.mean_variance, r.average_metric);
      });
      std::ofstream out(sweep_out, std::ios::binary);
      dmr::write_sweep_csv(out, results);
      return ok;
    }

    if (*gc_cmd) {
      const auto cfg = gc_flags.resolve(gc_cmd, tiny);
      const auto report = dmr::gradient_check(cfg, gc_tol);
      for (const auto& g : report.groups)
        std::printf("%-12s  params %4zu  max |grad| %.3e  rel err %.3e\n", g.group.c_str(), g.parameters,
                    g.max_abs_gradient, g.max_relative_error);
      std::printf("%s (tolerance %.1e)\n", report.passed ? "PASS" : "FAIL", gc_tol);
      return report.passed ? ok : failure;
    }

    if (*ex_cmd) {
      const auto cfg = ex_flags.resolve(ex_cmd, standard);
      std::ofstream out(ex_out, std::ios::binary);
      dmr::export_dataset(out, cfg.data, dmr::generate_dataset(cfg.data));
      return ok;
    }
  } catch (const dmr::ConfigError& e) {
    std::fprintf(stderr, "invalid config: %s\n", e.what());
    return invalid_config;
  } catch (const dmr::InvalidInput& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return invalid_config;
  } catch (const dmr::DivergenceError& e) {
    std::fprintf(stderr, "diverged at step %llu (epoch %d): %s\n", static_cast<unsigned long long>(e.step()),
                 e.epoch(), e.what());
    return diverged;
  } catch (const dmr::IntegrityError& e) {
    std::fprintf(stderr, "integrity error: %s\n", e.what());
    return integrity;
  } catch (const dmr::IncompatibleCheckpoint& e) {
    std::fprintf(stderr, "incompatible checkpoint: %s\n", e.what());
    return integrity;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return failure;
  }
  return ok;
}
