#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "p3o/adam.hpp"
#include "p3o/param_store.hpp"
#include "p3o/rollout.hpp"

namespace p3o {

struct PPOConfig {
  double clip_eps = 0.2;
  double gamma = 0.99;
  double lam = 0.95;
  int epochs = 4;
  int minibatch = 128;
  int n_steps = 256;  // per env; batch length = n_steps * n_envs
  int n_envs = 4;
  double lr = 1e-3;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  bool normalize_adv = true;
  bool record_wall_time = true;  // false zeroes wall_seconds for bitwise runs

  void validate() const;
};

// Scalar losses over a full batch given fresh per-sample outputs; used both
// by the update (vectorized path) and as the test oracle surface.
// L_policy = -mean(min(r*A, clip(r,1-eps,1+eps)*A)); L_value = mean((v-R)^2).
struct PPOLosses {
  double policy = 0;
  double value = 0;
};
PPOLosses ppo_losses(const std::vector<float>& ratios, const std::vector<float>& advantages,
                     const std::vector<float>& new_values, const std::vector<float>& returns,
                     double clip_eps);

struct UpdateStats {
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double clip_fraction = 0;
  double mean_ratio_first_minibatch = 0;  // diagnostic: 1 when on-policy
  double max_abs_ratio_err_first_minibatch = 0;
};

// `epochs` shuffled passes of minibatch Adam steps. The value-loss gradient
// is applied only when the value head is trainable (stage 2 optimizes the
// clipped surrogate alone); frozen entries never receive gradient.
UpdateStats ppo_update(const RolloutBatch& batch, ParamStore& params, AdamState& adam, Stage stage,
                       const PPOConfig& cfg, uint64_t seed);

struct UpdateRow {
  std::string stage;
  uint64_t seed = 0;
  int64_t env_steps = 0;
  int update = 0;
  double mean_return = 0;  // mean over recent completed training episodes
  double policy_loss = 0, value_loss = 0, entropy = 0, clip_fraction = 0;
  double wall_seconds = 0;
};

using UpdateCallback = std::function<void(const UpdateRow&)>;
// Called every eval_interval updates and once after the final update; a true
// return stops training early (used by pretraining once the target score is
// reached; transfer stages ignore it for matched budgets).
using EvalCallback = std::function<bool(const ParamStore&, int64_t env_steps)>;

// collect -> GAE -> update until the env-step budget is consumed
// (updates = floor(budget / (n_steps * n_envs)), one metrics row per update).
// `label` overrides the stage name in metrics rows (baseline modes).
ParamStore train_ppo(Stage stage, std::vector<Env>& envs, ParamStore params, const PPOConfig& cfg,
                     int64_t budget_env_steps, uint64_t seed,
                     const UpdateCallback& on_update = nullptr,
                     const EvalCallback& on_eval = nullptr, int eval_interval = 5,
                     const std::string& label = "");

}  // namespace p3o
