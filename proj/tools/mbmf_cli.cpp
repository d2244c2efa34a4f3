#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mbmf/harness.hpp"

namespace fs = std::filesystem;
using namespace mbmf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct RunArgs {
  std::string config_path;
  std::string method;
  int trials = -1;
  std::int64_t seed = -1;
  std::string out = "results";
};

harness::ExperimentConfig resolve_config(const RunArgs& args) {
  harness::ExperimentConfig cfg = harness::load_config(args.config_path);
  if (!args.method.empty()) cfg.method = harness::method_from_name(args.method);
  if (args.trials > 0) cfg.n_trials = args.trials;
  if (args.seed >= 0) cfg.base_seed = static_cast<std::uint64_t>(args.seed);
  cfg.validate();
  return cfg;
}

int do_run(const RunArgs& args) {
  harness::ExperimentConfig cfg = resolve_config(args);
  fs::create_directories(args.out);
  harness::save_config(cfg, (fs::path(args.out) / "config.json").string());
  harness::ExperimentResult result = harness::run_experiment(cfg, args.out);
  std::printf("%s: %d/%d trials valid, %zu records -> %s\n",
              cfg.method_label().c_str(), result.n_valid, cfg.n_trials,
              result.records.size(), args.out.c_str());
  if (result.n_valid == 0) {
    std::fprintf(stderr, "all trials failed\n");
    return kExitRuntime;
  }
  for (const harness::FinalRow& row : result.agg.finals)
    std::printf("  final incumbent: mean %.4f std %.4f (n=%d)\n", row.mean,
                row.std, row.n_valid_trials);
  return kExitOk;
}

int do_aggregate(const std::string& in, const std::string& out) {
  fs::path records_path(in);
  if (fs::is_directory(records_path)) records_path /= "records.csv";
  std::vector<harness::IterationRecord> records =
      harness::read_records_csv(records_path.string());
  if (records.empty()) {
    std::fprintf(stderr, "no records in %s\n", records_path.string().c_str());
    return kExitRuntime;
  }
  harness::AggregateResult agg = harness::aggregate(records);
  harness::write_summary_csv(agg, out);
  std::printf("aggregated %zu records into %s\n", records.size(), out.c_str());
  return kExitOk;
}

int do_sweep(const RunArgs& base, const std::string& param,
             const std::vector<int>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<harness::IterationRecord> all_records;
  int any_valid = 0;
  for (int value : values) {
    harness::ExperimentConfig cfg = resolve_config(base);
    if (param == "F") {
      cfg.method = harness::Method::MBMF;
      cfg.F = value;
    } else {
      cfg.method = harness::Method::MB_MF_SWITCH;
      cfg.K = value;
    }
    cfg.validate();
    std::string dir =
        (fs::path(base.out) / (param + "_" + std::to_string(value))).string();
    fs::create_directories(dir);
    harness::save_config(cfg, (fs::path(dir) / "config.json").string());
    harness::ExperimentResult result = harness::run_experiment(cfg, dir);
    std::printf("%s: %d/%d trials valid -> %s\n", cfg.method_label().c_str(),
                result.n_valid, cfg.n_trials, dir.c_str());
    any_valid += result.n_valid;
    for (const harness::TrialResult& tr : result.trials)
      if (tr.valid)
        all_records.insert(all_records.end(), tr.records.begin(),
                           tr.records.end());
  }
  if (any_valid == 0) {
    std::fprintf(stderr, "all trials failed across the sweep\n");
    return kExitRuntime;
  }
  harness::AggregateResult agg = harness::aggregate(all_records);
  std::string summary = (fs::path(base.out) / "sweep_summary.csv").string();
  harness::write_summary_csv(agg, summary);
  std::printf("sweep summary -> %s\n", summary.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MBMF policy search: BO with a learned-dynamics prior"};
  app.require_subcommand(1);

  RunArgs run_args;
  CLI::App* run = app.add_subcommand("run", "run one experiment config");
  run->add_option("--config", run_args.config_path, "config JSON path")
      ->required();
  run->add_option("--method", run_args.method,
                  "override method: MBMF|MB|MF|MB_MF_SWITCH");
  run->add_option("--trials", run_args.trials, "override n_trials");
  run->add_option("--seed", run_args.seed, "override base_seed");
  run->add_option("--out", run_args.out, "output directory");

  std::string agg_in, agg_out = "table.csv";
  CLI::App* agg = app.add_subcommand("aggregate",
                                     "summarize a records.csv into a table");
  agg->add_option("--in", agg_in, "run directory or records.csv path")
      ->required();
  agg->add_option("--out", agg_out, "output table path");

  std::string sweep_param;
  std::vector<int> sweep_values;
  CLI::App* sweep = app.add_subcommand("sweep", "sweep F or K over values");
  sweep->add_option("--param", sweep_param, "F or K")
      ->required()
      ->check(CLI::IsMember({"F", "K"}));
  sweep->add_option("--values", sweep_values, "comma-separated values")
      ->required()
      ->delimiter(',');
  sweep->add_option("--config", run_args.config_path, "config JSON path")
      ->required();
  sweep->add_option("--trials", run_args.trials, "override n_trials");
  sweep->add_option("--seed", run_args.seed, "override base_seed");
  sweep->add_option("--out", run_args.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) return do_run(run_args);
    if (agg->parsed()) return do_aggregate(agg_in, agg_out);
    return do_sweep(run_args, sweep_param, sweep_values);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
}
