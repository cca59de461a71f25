#pragma once

#include <cstdint>
#include <vector>

#include "p3o/env.hpp"
#include "p3o/param_store.hpp"

namespace p3o {

// On-policy experience, env-major layout: sample index = env * n_steps + t.
// Observations are kept in their 8-bit rendered form, so the update-time
// forward pass sees exactly the collection-time input.
struct RolloutBatch {
  int n_envs = 0, n_steps = 0;
  int obs_ch = 3, obs_res = 0;
  int action_dim = 2;
  std::vector<uint8_t> obs;             // [n, C, R, R]
  std::vector<float> actions;           // [n, A] unclamped Gaussian samples
  std::vector<float> behavior_mean;     // [n, A] policy mean at collection
  std::vector<float> behavior_log_std;  // [A] clamped log-std at collection
  std::vector<float> log_probs;         // [n]
  std::vector<float> rewards;           // [n]
  std::vector<float> values;            // [n]
  std::vector<uint8_t> dones;           // [n] transition ended its episode
  std::vector<float> bootstrap;         // [n_envs] V(s_T) per env
  std::vector<float> advantages;        // [n]
  std::vector<float> returns;           // [n]
  // episodes that finished during collection
  std::vector<float> episode_returns;

  int64_t size() const { return int64_t(n_envs) * n_steps; }
};

// Steps every env in lockstep with Gaussian actions from the current policy
// (batched forward over the env set). Finished episodes restart from a
// perturbed pose drawn from the env's own seed stream. GAE/returns are left
// empty; compute_gae_batch fills them.
RolloutBatch collect_rollouts(std::vector<Env>& envs, const ParamStore& params, bool use_prompt,
                              int n_steps, uint64_t seed);

// delta_t = r_t + gamma*v_{t+1}*(1-done_t) - v_t
// A_t = delta_t + gamma*lam*(1-done_t)*A_{t+1};  R = A + v
void compute_gae(const std::vector<float>& rewards, const std::vector<float>& values,
                 const std::vector<uint8_t>& dones, float bootstrap_value, double gamma,
                 double lam, std::vector<float>& advantages, std::vector<float>& returns);

// Per-env GAE plus optional batch-level advantage normalization.
void compute_gae_batch(RolloutBatch& batch, double gamma, double lam, bool normalize_adv);

}  // namespace p3o
