// pilotforge CLI: dataset generation, pilot selection, cascade training,
// evaluation sweeps and report emission.
//
// Exit codes: 0 success, 1 validation error, 2 runtime/numeric error.

#include <CLI11.hpp>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "pilotforge/pilotforge.hpp"

namespace {

using namespace pilotforge;

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

harness::ExperimentConfig load(const CommonOpts& opts) {
  auto cfg = harness::load_config(opts.config_path);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.out_dir) cfg.out_dir = *opts.out_dir;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config file")
      ->required();
  cmd->add_option("--seed", opts.seed, "override dataset.seed");
  cmd->add_option("--out", opts.out_dir, "override out.dir");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pilotforge: learned OFDM pilot placement and channel estimation"};
  app.require_subcommand(1);

  CommonOpts gen_opts;
  auto* gen = app.add_subcommand("gen-data", "generate train/val/test channel datasets");
  add_common(gen, gen_opts);

  CommonOpts sel_opts;
  int sel_np = 8;
  auto* sel = app.add_subcommand("select", "train the Concrete selector, emit a pattern");
  add_common(sel, sel_opts);
  sel->add_option("--np", sel_np, "number of pilots")->required();

  CommonOpts train_opts;
  int train_np = 8;
  std::string pattern_source = "cae";
  std::string snr_window = "full";
  auto* train = app.add_subcommand("train", "train the estimation cascade");
  add_common(train, train_opts);
  train->add_option("--np", train_np, "number of pilots")->required();
  train->add_option("--pattern", pattern_source, "pilot pattern source (cae|uniform)")
      ->required();
  train->add_option("--snr-window", snr_window, "training SNR window (full|low|high)");

  CommonOpts eval_opts;
  int eval_np = 8;
  auto* eval = app.add_subcommand("eval", "evaluate all methods, write a report CSV");
  add_common(eval, eval_opts);
  eval->add_option("--np", eval_np, "number of pilots")->required();

  CommonOpts report_opts;
  std::vector<std::string> report_csvs;
  auto* report = app.add_subcommand("report", "emit plot-ready figure files");
  add_common(report, report_opts);
  report->add_option("csv", report_csvs, "report CSV files (default: out dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) {
      harness::cmd_gen_data(load(gen_opts));
    } else if (sel->parsed()) {
      harness::cmd_select(load(sel_opts), sel_np);
    } else if (train->parsed()) {
      harness::cmd_train(load(train_opts), train_np,
                         harness::parse_pattern_source(pattern_source),
                         harness::parse_snr_window(snr_window));
    } else if (eval->parsed()) {
      harness::cmd_eval(load(eval_opts), eval_np);
    } else if (report->parsed()) {
      std::vector<std::filesystem::path> csvs(report_csvs.begin(), report_csvs.end());
      harness::cmd_report(load(report_opts), csvs);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
