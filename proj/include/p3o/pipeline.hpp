#pragma once

#include <memory>
#include <string>
#include <vector>

#include "p3o/checkpoint.hpp"
#include "p3o/config.hpp"
#include "p3o/imitation.hpp"
#include "p3o/track.hpp"

namespace p3o {

struct EvalResult {
  double mean_return = 0;
  double std_return = 0;
  double lap_fraction = 0;  // episodes that completed the lap
  std::vector<double> episode_returns;
};

double transfer_ratio(double target_mean, double source_mean);

// {"ppo_scratch","ppo_finetune","step1_only","step2_only","random"}
const std::vector<std::string>& baseline_modes();

// One experiment = (config, seed, output directory). Stage methods write
// checkpoints, shared metrics.csv/evals.csv rows, and eval_*.json files into
// the directory; everything is a pure function of (config, seed), so reruns
// reproduce the same bytes under strict_repro.
//
// Layout: config.json, pretrain.p3o, expert_<preset>.bin,
// step1_<preset>.p3o (+ .json stats), step2_<preset>.p3o,
// baseline_<mode>_<preset>.p3o, eval_<tag>.json, metrics.csv, evals.csv.
class Pipeline {
 public:
  Pipeline(RunConfig cfg, uint64_t seed, std::string out_dir);

  // PPO on env0 from scratch; early-stops once the eval return reaches
  // pretrain.early_stop_fraction of the scripted driver's return.
  void pretrain();
  // Scripted-driver demonstrations on the target preset (cached on disk).
  const ExpertDataset& collect_expert(const std::string& preset);
  // Imitation init of the prompt tower against the frozen backbone.
  Step1Stats step1(const std::string& preset);
  // Prompt-only PPO on the target preset from the step-1 checkpoint.
  void step2(const std::string& preset);
  // Baselines; trained modes use the matched transfer budget.
  void baseline(const std::string& mode, const std::string& preset);

  // Final evals (eval.episodes, deterministic by default). Each writes
  // eval_<tag>.json and returns the result.
  EvalResult eval_checkpoint(const std::string& ckpt_file, const std::string& preset,
                             const std::string& tag);
  EvalResult eval_expert(const std::string& preset);
  EvalResult eval_random_actions(const std::string& preset);

  // Episode starts come from one fixed eval seed, so scores are comparable
  // across policies, stages, and presets (variants share dynamics).
  EvalResult evaluate(const ParamStore& params, bool use_prompt, const std::string& preset,
                      int episodes) const;

  std::string path(const std::string& file) const;
  const RunConfig& config() const { return cfg_; }
  uint64_t seed() const { return seed_; }
  std::shared_ptr<const Track> track() const { return track_; }

 private:
  std::vector<Env> make_envs(const std::string& preset, uint64_t stream);
  ParamStore load_stage(const std::string& file, Stage expect) const;
  EvalResult evaluate_expert_internal(const std::string& preset, int episodes) const;
  void write_eval_json(const std::string& tag, const std::string& preset, const std::string& mode,
                       bool use_prompt, const EvalResult& r) const;

  RunConfig cfg_;
  uint64_t seed_ = 0;
  std::string dir_;
  std::shared_ptr<const Track> track_;
  uint64_t eval_seed_ = 0;
  std::unique_ptr<ExpertDataset> dataset_;  // last collect_expert result
};

}  // namespace p3o
