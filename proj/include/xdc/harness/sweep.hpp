#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "xdc/harness/config.hpp"
#include "xdc/harness/evaluate.hpp"
#include "xdc/harness/train.hpp"

namespace xdc::harness {

// {"base": {...config overrides...}, "grid": {"xdc.width": [5, 15], ...}}
struct SweepGrid {
  json base = json::object();
  std::vector<std::pair<std::string, std::vector<json>>> axes;  // key order
};

inline SweepGrid parse_grid(const json& j) {
  detail::reject_unknown(j, {"base", "grid"}, "sweep");
  SweepGrid g;
  if (j.contains("base")) g.base = j["base"];
  if (!j.contains("grid") || !j["grid"].is_object() || j["grid"].empty())
    throw ConfigError("sweep: 'grid' must be a non-empty object of value lists");
  for (auto it = j["grid"].begin(); it != j["grid"].end(); ++it) {
    if (!it.value().is_array() || it.value().empty())
      throw ConfigError("sweep: grid entry '" + it.key() + "' must be a non-empty list");
    if (it.key().find('.') == std::string::npos && it.key() != "seed" && it.key() != "model")
      throw ConfigError("sweep: grid key '" + it.key() + "' must be 'section.field', 'seed' or 'model'");
    g.axes.push_back({it.key(), it.value().get<std::vector<json>>()});
  }
  return g;
}

inline SweepGrid load_grid(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("sweep: cannot open grid '" + p.string() + "'");
  try {
    return parse_grid(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("sweep: '" + p.string() + "' is not valid JSON: " + e.what());
  }
}

inline void set_dotted(json& j, const std::string& key, const json& value) {
  const auto dot = key.find('.');
  if (dot == std::string::npos) {
    j[key] = value;
    return;
  }
  set_dotted(j[key.substr(0, dot)], key.substr(dot + 1), value);
}

struct SweepCell {
  std::vector<json> values;  // one per axis
  std::string status = "ok";
  json summary;
};

// Runs train + evaluate per cell into out/cell_<n>/; failures are recorded
// and the sweep moves on.
inline std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const SweepGrid& g,
                                        const std::filesystem::path& out, const Logger& log = {}) {
  if (g.axes.empty()) throw ConfigError("sweep: empty grid");
  std::size_t cells = 1;
  for (const auto& a : g.axes) cells *= a.second.size();
  std::filesystem::create_directories(out);
  std::vector<SweepCell> rows;
  for (std::size_t n = 0; n < cells; ++n) {
    SweepCell cell;
    json cj = to_json(from_json(g.base, base));
    std::size_t rest = n;
    for (std::size_t a = g.axes.size(); a-- > 0;) {
      const auto& vals = g.axes[a].second;
      cell.values.insert(cell.values.begin(), vals[rest % vals.size()]);
      rest /= vals.size();
    }
    for (std::size_t a = 0; a < g.axes.size(); ++a) set_dotted(cj, g.axes[a].first, cell.values[a]);
    char name[32];
    std::snprintf(name, sizeof name, "cell_%03zu", n);
    try {
      const auto c = from_json(cj, default_config());
      validate(c);
      const auto dir = out / name;
      auto r = train(c, dir, log);
      const auto report = evaluate_examples(load_examples(c, Split::Test),
                                            [&](const Example& ex) { return separate(r.model, ex); });
      write_eval_outputs(report, c, to_string(c.model), dir);
      cell.summary = summary_json(report, c, to_string(c.model));
    } catch (const std::exception& e) {
      cell.status = std::string("error: ") + e.what();
    }
    if (log) log(std::string(name) + " " + cell.status);
    rows.push_back(std::move(cell));
  }

  std::ostringstream csv;
  csv << "# config_hash=" << config_hash(base) << " seed=" << base.seed << '\n';
  csv << "cell";
  for (const auto& a : g.axes) csv << ',' << a.first;
  csv << ",status,sdr_mean,sdr_median,sdr_improvement_median\n";
  json all = json::array();
  for (std::size_t n = 0; n < rows.size(); ++n) {
    const auto& r = rows[n];
    csv << n;
    json entry{{"cell", n}, {"status", r.status}};
    for (std::size_t a = 0; a < g.axes.size(); ++a) {
      csv << ',' << r.values[a].dump();
      entry["params"][g.axes[a].first] = r.values[a];
    }
    std::string status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    csv << ',' << status;
    if (r.status == "ok") {
      csv << ',' << detail::fmt(r.summary["sdr"]["mean"].get<double>()) << ','
          << detail::fmt(r.summary["sdr"]["median"].get<double>()) << ','
          << detail::fmt(r.summary["sdr_improvement"]["median"].get<double>());
      entry["summary"] = r.summary;
    } else {
      csv << ",,,";
    }
    csv << '\n';
    all.push_back(entry);
  }
  xdc::detail::write_file(out / "sweep.csv", csv.str());
  xdc::detail::write_file(out / "sweep.json", all.dump(2) + "\n");
  return rows;
}

}  // namespace xdc::harness
