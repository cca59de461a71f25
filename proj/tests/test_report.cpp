#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "p3o/report.hpp"

using namespace p3o;
namespace fs = std::filesystem;

namespace {

using Series = std::vector<std::pair<int64_t, double>>;

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::trunc);
  REQUIRE(f.good());
  f << text;
}

void write_eval_json(const fs::path& dir, const std::string& tag, double mean) {
  write_text(dir / ("eval_" + tag + ".json"),
             "{\"tag\": \"" + tag + "\", \"mean_return\": " + std::to_string(mean) + "}");
}

// One synthetic seed directory covering env1 fully; env2..env6 stay empty so
// their cells must come out as n/a.
fs::path make_seed_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "p3o_report_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_text(dir / "config.json", "{}");

  write_eval_json(dir, "pretrain_env0", 900.0);
  write_eval_json(dir, "pretrain_env1", 90.0);
  write_eval_json(dir, "step2_env1", 945.0);
  write_eval_json(dir, "step1_only_env1", 400.0);
  write_eval_json(dir, "step2_only_env1", 300.0);
  write_eval_json(dir, "ppo_scratch_env1", -80.0);
  write_eval_json(dir, "ppo_finetune_env1", 700.0);
  write_eval_json(dir, "random_env1", -100.0);

  std::ofstream f(dir / "evals.csv", std::ios::trunc);
  f << "stage,seed,env_steps,eval_return\n";
  // p3o series: constant 1000 over 6 evals; with the 5-point window the first
  // moving average lands on eval 5 -> convergence step 5120.
  for (int k = 1; k <= 6; ++k) f << "step2_env1,1," << 1024 * k << ",1000\n";
  // scratch stays negative and declining: the final MA is negative, 90% of it
  // is a *higher* bar, so it never converges (F).
  f << "ppo_scratch_env1,1,1024,-80\n";
  f << "ppo_scratch_env1,1,2048,-85\n";
  f << "ppo_scratch_env1,1,3072,-90\n";
  // two-point series: window clamps to 2, single MA point -> step 2048.
  f << "step2_only_env1,1,1024,10\n";
  f << "step2_only_env1,1,2048,10\n";
  return dir;
}

}  // namespace

TEST_CASE("convergence step oracles") {
  // Window 1: moving average is the series itself; final value 10, threshold
  // 9, first crossing at step 4.
  Series s = {{1, 0}, {2, 0}, {3, 0}, {4, 10}, {5, 10}};
  CHECK(convergence_step(s, 1) == 4);
  // Window >= length: a single average point at the last step.
  CHECK(convergence_step(s, 5) == 5);
  CHECK(convergence_step(s, 50) == 5);

  // All-negative improving series: 90% of a negative final MA is above the
  // final MA, so the threshold is never reached.
  CHECK(convergence_step({{1, -10}, {2, -5}, {3, -1}}, 1) == -1);

  // Declining positive series "converges" immediately.
  CHECK(convergence_step({{1, 10}, {2, 5}, {3, 1}}, 1) == 1);

  // Constant series converges at the first full window.
  CHECK(convergence_step({{5, 2}, {10, 2}, {15, 2}}, 2) == 10);

  // Standard shape: ramp with window 2 reaches 90% of 4.5 only at the end.
  CHECK(convergence_step({{1, 0}, {2, 1}, {3, 2}, {4, 3}, {5, 4}, {6, 5}}, 2) == 6);

  CHECK_THROWS(convergence_step({}, 5));
  CHECK_THROWS(convergence_step(s, 0));
}

TEST_CASE("report tables over synthetic run dirs") {
  const fs::path d1 = make_seed_dir("seed_a");
  const fs::path d2 = make_seed_dir("seed_b");
  const Report r = build_report({d1.string(), d2.string()});

  // Transfer: identical seeds, so the averages are the raw numbers.
  // ratio columns: 90/900 = 0.100 (degraded), 945/900 = 1.050 (restored).
  CHECK(r.transfer_table.find("env1") != std::string::npos);
  CHECK(r.transfer_table.find("0.100") != std::string::npos);
  CHECK(r.transfer_table.find("1.050") != std::string::npos);
  CHECK(r.transfer_table.find("n/a") != std::string::npos);  // env2..env6
  CHECK(r.csv.find("transfer,env0,source,900\n") != std::string::npos);
  CHECK(r.csv.find("transfer,env1,pretrain_ratio,0.1\n") != std::string::npos);
  CHECK(r.csv.find("transfer,env1,p3o_ratio,1.05\n") != std::string::npos);
  CHECK(r.csv.find("transfer,env2,p3o,n/a\n") != std::string::npos);

  // Efficiency: hand-derived convergence cells.
  CHECK(r.csv.find("efficiency,env1,p3o,5120\n") != std::string::npos);
  CHECK(r.csv.find("efficiency,env1,ppo_scratch,F\n") != std::string::npos);
  CHECK(r.csv.find("efficiency,env1,step2_only,2048\n") != std::string::npos);
  CHECK(r.csv.find("efficiency,env1,ppo_finetune,n/a\n") != std::string::npos);
  CHECK(r.csv.find("efficiency,env1,step1_only,-\n") != std::string::npos);
  CHECK(r.efficiency_table.find("5120") != std::string::npos);
  CHECK(r.efficiency_table.find("F") != std::string::npos);

  // Ablation: final returns per mode, n/a where the preset was never run.
  CHECK(r.csv.find("ablation,env1,p3o,945\n") != std::string::npos);
  CHECK(r.csv.find("ablation,env1,step1_only,400\n") != std::string::npos);
  CHECK(r.csv.find("ablation,env1,ppo_scratch,-80\n") != std::string::npos);
  CHECK(r.csv.find("ablation,env1,random,-100\n") != std::string::npos);
  CHECK(r.csv.find("ablation,env3,p3o,n/a\n") != std::string::npos);

  // write_report materializes both files.
  const fs::path out = fs::temp_directory_path() / "p3o_report_tests" / "out";
  fs::remove_all(out);
  write_report(r, out.string());
  std::ifstream txt(out / "report.txt");
  REQUIRE(txt.good());
  std::string all((std::istreambuf_iterator<char>(txt)), std::istreambuf_iterator<char>());
  CHECK(all.find("Transfer scores and ratios") != std::string::npos);
  CHECK(all.find("Training efficiency") != std::string::npos);
  CHECK(all.find("Ablation") != std::string::npos);
  CHECK(fs::exists(out / "report.csv"));

  CHECK_THROWS(build_report({}));
  CHECK_THROWS(build_report({(fs::temp_directory_path() / "nope_no_dir").string()}));
}
