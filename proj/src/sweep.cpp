#include "dmr/sweep.hpp"

#include <cstdio>
#include <ostream>
#include <sstream>

#include "dmr/errors.hpp"

namespace dmr {

using nlohmann::json;

ExperimentConfig with_override(const ExperimentConfig& config, const std::string& key, const json& value) {
  json j = config_to_json(config);
  std::string pointer = "/" + key;
  for (auto& c : pointer)
    if (c == '.') c = '/';
  const json::json_pointer ptr(pointer);
  if (!j.contains(ptr)) throw ConfigError("unknown config key '" + key + "'");
  j[ptr] = value;
  return config_from_json(j, config);
}

GridAxis parse_grid_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("grid axis must look like key=v1,v2,...");
  GridAxis axis;
  axis.key = text.substr(0, eq);
  std::stringstream rest(text.substr(eq + 1));
  std::string item;
  while (std::getline(rest, item, ',')) {
    if (item.empty()) continue;
    try {
      axis.values.push_back(json::parse(item));
    } catch (const json::exception&) {
      axis.values.emplace_back(item);  // bare string such as a mode name
    }
  }
  if (axis.values.empty()) throw ConfigError("grid axis '" + axis.key + "' has no values");
  return axis;
}

std::string SweepPoint::label() const {
  std::string out;
  for (const auto& [k, v] : assignment) {
    if (!out.empty()) out += ';';
    out += k + "=" + (v.is_string() ? v.get<std::string>() : v.dump());
  }
  return out;
}

std::vector<SweepPoint> expand_grid(const ExperimentConfig& base, const std::vector<GridAxis>& grid,
                                    std::size_t replicates) {
  if (grid.empty()) throw InvalidInput("sweep grid is empty");
  if (replicates < 1) throw InvalidInput("need at least one replicate");
  for (const auto& axis : grid)
    if (axis.values.empty()) throw InvalidInput("grid axis '" + axis.key + "' has no values");

  std::vector<std::vector<std::pair<std::string, json>>> points{{}};
  for (const auto& axis : grid) {
    std::vector<std::vector<std::pair<std::string, json>>> next;
    for (const auto& p : points)
      for (const auto& v : axis.values) {
        auto q = p;
        q.emplace_back(axis.key, v);
        next.push_back(std::move(q));
      }
    points = std::move(next);
  }

  std::vector<SweepPoint> out;
  for (std::size_t r = 0; r < replicates; ++r) {
    ExperimentConfig seeded = base;
    seeded.seed = base.seed + r;
    seeded.data.seed = base.data.seed + r;
    for (const auto& assignment : points) {
      SweepPoint sp;
      sp.assignment = assignment;
      sp.replicate = r;
      sp.config = seeded;
      for (const auto& [k, v] : assignment) sp.config = with_override(sp.config, k, v);
      out.push_back(std::move(sp));
    }
  }
  return out;
}

std::vector<SweepResult> sweep(const ExperimentConfig& base, const std::vector<GridAxis>& grid, std::size_t replicates,
                               const std::function<void(const SweepResult&)>& on_result) {
  std::vector<SweepResult> results;
  for (auto& point : expand_grid(base, grid, replicates)) {
    SweepResult res;
    res.point = std::move(point);
    try {
      auto run = train(res.point.config);
      res.mean_variance = final_mean_variance(run.record);
      res.average_metric = run.record.results ? run.record.results->average : 0.0;
      res.record = std::move(run.record);
    } catch (const DivergenceError& e) {
      res.status = "diverged";
    } catch (const std::exception& e) {
      res.status = std::string("error: ") + e.what();
    }
    if (on_result) on_result(res);
    results.push_back(std::move(res));
  }
  return results;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepResult>& results) {
  out << "point,replicate,seed,data_seed,status,mean_sigma2,average_metric\n";
  char buf[64];
  for (const auto& r : results) {
    std::string status = r.status;
    for (auto& c : status)
      if (c == ',' || c == '\n') c = ' ';
    out << '"' << r.point.label() << "\"," << r.point.replicate << ',' << r.point.config.seed << ','
        << r.point.config.data.seed << ',' << status << ',';
    std::snprintf(buf, sizeof buf, "%.10g,%.10g", r.mean_variance, r.average_metric);
    out << buf << '\n';
  }
}

}  // namespace dmr
