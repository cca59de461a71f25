#pragma once

#include <cstdint>
#include <string>

#include "p3o/agent.hpp"
#include "p3o/env.hpp"
#include "p3o/expert.hpp"
#include "p3o/ppo.hpp"
#include "p3o/track.hpp"

namespace p3o {

struct PretrainConfig {
  double lr = 1e-3;
  int64_t budget = 500000;  // env steps
  int eval_interval = 5;    // updates between eval points
  // Stop once the eval return reaches this fraction of the scripted driver's
  // return (0 disables; transfer stages always run their full budget).
  double early_stop_fraction = 0.85;
};

struct TransferConfig {
  double lr = 1e-3;
  int64_t budget = 24576;  // 24 updates of 4x256; matched across transfer modes
  int eval_interval = 1;
};

struct ImitationConfig {
  int sets = 4;
  int pairs_per_set = 1500;
  int epochs = 20;
  double lr = 1e-3;
  int batch = 128;
  double holdout = 0.1;
  double target_accuracy = 0.99;     // train-accuracy early stop (0 disables)
  std::string prompt_init = "random";  // "random" (fresh) or "copy" (from the frozen encoder)
};

struct EvalRunConfig {
  int episodes = 20;       // final table evals
  int train_episodes = 6;  // cheaper periodic evals during training (evals.csv)
  bool deterministic = true;  // act with the Gaussian mean
};

// Whole-experiment configuration. JSON parsing is strict: unknown keys are
// rejected with their dotted path, and every field has the default shown in
// the struct definitions.
struct RunConfig {
  ArchConfig arch;
  uint64_t track_seed = 7;
  TrackGenConfig track;
  EnvConfig env;
  PPOConfig ppo;  // shared PPO base; per-stage lr/budget below
  PretrainConfig pretrain;
  TransferConfig step2{2e-4, 24576, 1};
  TransferConfig finetune{1e-3, 24576, 1};
  TransferConfig scratch{1e-3, 24576, 1};
  ImitationConfig imitation;
  EvalRunConfig eval;
  ExpertConfig expert;
  bool strict_repro = false;  // zero wall-clock fields so reruns are byte-identical

  void validate() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
// Fully resolved echo (sorted keys, 2-space indent); parses back to an
// identical config.
std::string run_config_to_json(const RunConfig& cfg);

// Shared PPO base with a stage lr applied and wall-clock recording resolved
// from strict_repro.
PPOConfig ppo_with_lr(const RunConfig& cfg, double lr);

}  // namespace p3o
