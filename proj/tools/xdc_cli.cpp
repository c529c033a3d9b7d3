#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "xdc/harness/sweep.hpp"
#include "xdc/harness/train.hpp"

namespace fs = std::filesystem;
using namespace xdc;
using namespace xdc::harness;

namespace {

constexpr int kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitDiverged = 3;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> model;
  std::string out = "out";
  bool print_config = false;
};

ExperimentConfig resolve(const Globals& g) {
  auto c = g.config_path.empty() ? default_config() : load_config(g.config_path);
  if (g.seed) c.seed = *g.seed;
  if (g.model) c.model = parse_model_kind(*g.model);
  validate(c);
  return c;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

// Wall-clock data lives here only, so every other artifact stays reproducible.
class Timing {
 public:
  explicit Timing(std::string command) : command_(std::move(command)), t0_(std::chrono::steady_clock::now()) {}
  void write(const fs::path& dir, const ExperimentConfig& c) const {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    char stamp[32];
    const std::time_t now = std::time(nullptr);
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    const json j{{"command", command_},
                 {"config_hash", config_hash(c)},
                 {"seed", c.seed},
                 {"wall_seconds", secs},
                 {"finished_at", stamp}};
    fs::create_directories(dir);
    xdc::detail::write_file(dir / "timing.json", j.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::chrono::steady_clock::time_point t0_;
};

void write_config(const fs::path& dir, const ExperimentConfig& c) {
  fs::create_directories(dir);
  xdc::detail::write_file(dir / "config.json", to_json(c).dump(2) + "\n");
}

void print_summary(const json& s) {
  std::printf("%s: %zu rows, SDR median %.3f dB (mean %.3f), improvement median %.3f dB\n",
              s["method"].get<std::string>().c_str(), s["rows"].get<std::size_t>(),
              s["sdr"]["median"].get<double>(), s["sdr"]["mean"].get<double>(),
              s["sdr_improvement"]["median"].get<double>());
}

ModelState load_checkpoint_model(const std::string& path) {
  return load_model(load_checkpoint(path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explainable deep clustering: data, training, evaluation and template export"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Experiment config (JSON); defaults apply otherwise")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--model", g.model, "Override the model kind (xdc, dc-gatedconv, danet, nmf, nmfd)");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_flag("--print-config", g.print_config, "Print the resolved config and exit");

  auto* gen = app.add_subcommand("gen-data", "Write the dataset as WAVs plus manifest.jsonl");
  auto* train_cmd = app.add_subcommand("train", "Train the configured model");

  auto* eval_cmd = app.add_subcommand("evaluate", "Score separations of the test split");
  std::string checkpoint;
  bool oracle = false, mixture = false;
  auto* ck_opt = eval_cmd->add_option("--checkpoint", checkpoint, "Trained model checkpoint")
                     ->check(CLI::ExistingFile);
  auto* or_opt = eval_cmd->add_flag("--oracle", oracle, "Ideal power-ratio masks from the true sources");
  auto* mx_opt = eval_cmd->add_flag("--mixture", mixture, "Unprocessed mixture as every estimate");
  ck_opt->excludes(or_opt)->excludes(mx_opt);
  or_opt->excludes(mx_opt);

  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate every cell of a parameter grid");
  std::string grid;
  sweep_cmd->add_option("--grid", grid, "Grid JSON: {\"base\": {...}, \"grid\": {\"xdc.width\": [..]}}")
      ->required()
      ->check(CLI::ExistingFile);

  auto* export_cmd = app.add_subcommand("export-templates", "Dump X-DC templates and activations as CSV");
  std::string export_ck;
  export_cmd->add_option("--checkpoint", export_ck, "Trained X-DC checkpoint")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const fs::path out(g.out);
  try {
    if (g.print_config) {
      auto c = resolve(g);
      if (eval_cmd->parsed() && !checkpoint.empty()) c = checkpoint_config(load_checkpoint(checkpoint));
      std::cout << to_json(c).dump(2) << "\n";
      return kExitOk;
    }

    if (gen->parsed()) {
      Timing t("gen-data");
      const auto c = resolve(g);
      const auto path = gen_data(c, out);
      write_config(out, c);
      t.write(out, c);
      std::cout << "wrote " << path.string() << "\n";
    } else if (train_cmd->parsed()) {
      Timing t("train");
      const auto c = resolve(g);
      write_config(out, c);
      try {
        const auto r = train(c, out, log_line);
        if (r.report.best)
          std::printf("kept epoch %zu (validation SDR %.3f dB)\n", r.report.validation[*r.report.best].epoch,
                      r.report.validation[*r.report.best].sdr);
      } catch (const DivergenceError&) {
        t.write(out, c);
        throw;
      }
      t.write(out, c);
      std::cout << "wrote " << (out / "model.ckpt").string() << "\n";
    } else if (eval_cmd->parsed()) {
      Timing t("evaluate");
      if (checkpoint.empty() && !oracle && !mixture)
        throw ConfigError("evaluate: give one of --checkpoint, --oracle or --mixture");
      ExperimentConfig c;
      std::string method;
      Separator sep;
      std::optional<ModelState> model;
      if (!checkpoint.empty()) {
        model = load_checkpoint_model(checkpoint);
        c = model->config;
        // An explicit config may point the trained model at other data.
        if (!g.config_path.empty()) {
          const auto file = load_config(g.config_path);
          c.data = file.data;
          c.manifest_speakers = file.manifest_speakers;
        }
        if (g.seed) c.seed = *g.seed;
        method = to_string(c.model);
        sep = [&](const Example& ex) { return separate(*model, ex); };
      } else {
        c = resolve(g);
        method = oracle ? "oracle" : "mixture";
        sep = oracle ? Separator(oracle_separation) : Separator(mixture_separation);
      }
      const auto report = evaluate_examples(load_examples(c, Split::Test), sep);
      if (report.rows.empty()) throw ConfigError("evaluate: the test split is empty");
      write_eval_outputs(report, c, method, out);
      t.write(out, c);
      print_summary(summary_json(report, c, method));
    } else if (sweep_cmd->parsed()) {
      Timing t("sweep");
      const auto c = resolve(g);
      const auto rows = run_sweep(c, load_grid(grid), out, log_line);
      t.write(out, c);
      std::size_t failed = 0;
      for (const auto& r : rows) failed += r.status != "ok";
      std::printf("%zu cells, %zu failed; wrote %s\n", rows.size(), failed, (out / "sweep.csv").string().c_str());
    } else if (export_cmd->parsed()) {
      Timing t("export-templates");
      const auto s = load_checkpoint_model(export_ck);
      if (!s.xdc)
        throw ConfigError("export-templates: checkpoint holds a " + to_string(s.config.model) +
                          " model; templates exist only for xdc");
      auto c = s.config;
      if (!g.config_path.empty()) c.data = load_config(g.config_path).data;
      const auto test = load_examples(c, Split::Test);
      if (test.empty()) {
        model::export_templates(*s.xdc, out);
      } else {
        const auto f = make_features(test.front());
        const auto masks = model::infer_masks(*s.xdc, f.magnitude, test.front().mixture.frames);
        model::export_templates(*s.xdc, out, &masks);
      }
      t.write(out, c);
      std::cout << "wrote templates to " << out.string() << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}
