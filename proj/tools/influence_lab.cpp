// influence-lab: config-driven influence-function experiments writing CSV.
//
//   influence-lab <command> --config <file> [--out <path>] [--seed <u64>]
//                 [--threads <k>] [--gnuplot <path>]
//
// Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "harness/config.hpp"
#include "harness/experiments.hpp"
#include "harness/output.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

}  // namespace

int main(int argc, char** argv) {
  using namespace inflab;
  using namespace inflab::harness;

  CLI::App app{"Influence-function experiments: statistical convergence, iHVP solvers, influential subsets"};
  app.require_subcommand(1, 1);

  std::string config_path, out_path, gnuplot_path;
  std::uint64_t seed = 0;
  unsigned threads = 0;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"convergence", "error of the empirical influence against a reference sample, over n"},
      {"solvers", "iHVP solver error against oracle-call budget"},
      {"subset", "most-influential-subset value against its reference-sample value, over n"},
      {"fit", "fit the model and print the parameters"},
      {"influence", "influence of the configured point, exact and with the configured solver"},
      {"predict-cost", "evaluate the oracle-call cost formulas"},
  };
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config,-c", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out,-o", out_path, "CSV output path (default: [experiment] output, else stdout)");
    sub->add_option("--seed", seed, "override [experiment] seed");
    sub->add_option("--threads", threads, "override [experiment] threads")->check(CLI::PositiveNumber);
    sub->add_option("--gnuplot", gnuplot_path, "also write a gnuplot script plotting the CSV");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const auto* chosen = app.get_subcommands().front();
    // The command decides which experiment runs; the config supplies its parameters.
    ExperimentConfig cfg = load_config(config_path, parse_experiment_kind(chosen->get_name()));
    if (chosen->count("--seed")) cfg.seed = seed;
    if (threads > 0) cfg.threads = threads;
    if (!out_path.empty()) cfg.output = out_path;
    validate(cfg);

    const CsvTable table = run_experiment(cfg);
    const std::string csv = table.render();
    if (cfg.output.empty()) {
      std::cout << csv;
    } else {
      write_text(cfg.output, csv);
    }
    if (!gnuplot_path.empty()) {
      if (cfg.output.empty()) fail(ErrorCode::ConfigError, "--gnuplot needs the CSV written to a file (--out)");
      write_text(gnuplot_path, gnuplot_script(cfg.kind, cfg.output, table));
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "influence-lab: " << e.what() << "\n";
    return is_input_error(e.code()) ? kExitConfig : kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "influence-lab: " << e.what() << "\n";
    return kExitNumeric;
  }
}
