#pragma once

#include <map>
#include <string>
#include <vector>

#include "mbmf/bayesopt.hpp"
#include "mbmf/dynamics.hpp"
#include "mbmf/env.hpp"
#include "mbmf/gp.hpp"

namespace mbmf::harness {

enum class Method { MBMF, MB, MF, MB_MF_SWITCH };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct DirectConfig {
  int acq_budget = 0;  // 0 = 200 * theta dim
  int mb_budget = 0;   // 0 = 500 * theta dim
  double epsilon = 1e-4;
};

struct GpConfigs {
  gp::FitConfig surface;   // response-surface fits (seed set per iteration)
  gp::FitConfig dynamics;  // dynamics fits (seed set per epoch)
};

struct ExperimentConfig {
  Method method = Method::MBMF;
  int F = 1;       // prior update period (MBMF)
  int K = 1;       // switch iteration (MB+MF)
  int n_init = 3;
  int n_iters = 25;
  int n_trials = 30;
  std::uint64_t base_seed = 0;
  env::EnvSpec env = env::reference_pointmass();
  dyn::McConfig mc;  // caps.penalty is derived at run time (10x worst cost)
  DirectConfig direct;
  GpConfigs gp;
  double obs_noise_sigma = 0.0;
  bool record_wall_time = false;  // keep false for byte-stable records.csv
  double theta_lower = -5.0;
  double theta_upper = 5.0;

  void validate() const;
  // "MBMF(F=10)", "MB_MF_SWITCH(K=5)", "MB", "MF" — the label written to CSV.
  std::string method_label() const;
  int acq_budget() const;
  int mb_budget() const;
  direct_opt::SearchBox theta_box() const;
};

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& config, const std::string& path);

struct IterationRecord {
  std::string method;  // method label, carries F/K variant
  int trial = 0;
  int iteration = 0;  // 1-based outer iteration
  Vec proposed_theta;
  double observed_cost = 0.0;
  double incumbent_cost = 0.0;  // min observed over iterations <= this one
  double wall_time = 0.0;       // measured seconds; written as 0 unless enabled
};

struct TrialData {
  dyn::TransitionDataset d1;
  bo::CostDataset d2;
};

// Alg. 1 lines 1-3: n_init policies from N(0, I) seeded by base_seed xor
// trial, rolled out on the environment. Identical across methods.
TrialData init_trial(const ExperimentConfig& config, int trial);

struct TrialResult {
  std::vector<IterationRecord> records;
  bool valid = true;
  std::string error;      // diagnostic when a GP/optimizer failure aborted
  Vec final_theta;        // incumbent policy after the last completed iteration
};

TrialResult run_mbmf(const ExperimentConfig& config, int trial);
TrialResult run_mb(const ExperimentConfig& config, int trial);
TrialResult run_mf(const ExperimentConfig& config, int trial);
TrialResult run_mb_then_mf(const ExperimentConfig& config, int trial);
TrialResult run_trial(const ExperimentConfig& config, int trial);

struct CurvePoint {
  int iteration = 0;
  double mean = 0.0;
  double std = 0.0;  // sample std; 0 for a single trial
  int n = 0;
};

struct FinalRow {
  std::string method;
  int F = 0;
  int K = 0;
  double mean = 0.0;
  double std = 0.0;
  int n_valid_trials = 0;
};

struct AggregateResult {
  std::map<std::string, std::vector<CurvePoint>> curves;  // per method label
  std::vector<FinalRow> finals;
};

// Per method label and iteration: mean/sample-std of incumbent cost across
// trials; plus the final-iteration table. Only complete trials participate
// (records must reach the maximum iteration seen for their label).
AggregateResult aggregate(const std::vector<IterationRecord>& records);

void write_records_csv(const std::vector<IterationRecord>& records,
                       const std::string& path, bool record_wall_time);
std::vector<IterationRecord> read_records_csv(const std::string& path);
void write_summary_csv(const AggregateResult& agg, const std::string& path);

struct ExperimentResult {
  std::vector<IterationRecord> records;  // sorted (method, trial, iteration)
  std::vector<TrialResult> trials;
  AggregateResult agg;
  int n_valid = 0;
};

// Runs all trials of one config. If out_dir is non-empty, writes
// records.csv, summary.csv and trajectories/<method>_<trial>.csv there.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::string& out_dir = "");

}  // namespace mbmf::harness
