#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace p3o {

// First env-step count where the `window`-point moving average of the eval
// series reaches 90% of its final moving average; -1 when never reached
// ("F", fails to converge). The series is (env_steps, eval_return) in
// ascending step order, as written to evals.csv.
int64_t convergence_step(const std::vector<std::pair<int64_t, double>>& series, int window = 5);

// Three text tables in the shape of the paper's results: transfer ratios,
// training efficiency (convergence steps), and the ablation grid; plus a
// machine-readable long-form CSV of every cell. Inputs are run directories
// (one per seed) produced by the pipeline.
struct Report {
  std::string transfer_table;    // per-preset scores and target/source ratios
  std::string efficiency_table;  // convergence steps; F = fails, - = no training
  std::string ablation_table;    // seed-averaged final returns per mode
  std::string csv;               // section,preset,column,value
};

Report build_report(const std::vector<std::string>& run_dirs);

// Writes report.txt (all three tables) and report.csv into out_dir.
void write_report(const Report& report, const std::string& out_dir);

}  // namespace p3o
