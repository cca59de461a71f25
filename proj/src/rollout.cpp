#include "p3o/rollout.hpp"

#include <cmath>
#include <cstring>

#include "p3o/agent.hpp"
#include "p3o/kernels.hpp"

namespace p3o {

RolloutBatch collect_rollouts(std::vector<Env>& envs, const ParamStore& params, bool use_prompt,
                              int n_steps, uint64_t seed) {
  require(!envs.empty(), "collect_rollouts requires at least one env");
  require(n_steps > 0, "collect_rollouts requires n_steps > 0");
  const int E = int(envs.size());
  const int R = envs.front().config().resolution;
  for (auto& e : envs) {
    require(!e.done(), "all envs must be in a live episode before collection");
    require(e.config().resolution == R, "envs must share one observation resolution");
  }

  RolloutBatch b;
  b.n_envs = E;
  b.n_steps = n_steps;
  b.obs_res = R;
  b.behavior_log_std = current_log_std(params);
  const int A = int(b.behavior_log_std.size());
  b.action_dim = A;
  const size_t obs_sz = size_t(3) * R * R;
  const size_t n = size_t(E) * size_t(n_steps);
  b.obs.resize(n * obs_sz);
  b.actions.resize(n * size_t(A));
  b.behavior_mean.resize(n * size_t(A));
  b.log_probs.resize(n);
  b.rewards.resize(n);
  b.values.resize(n);
  b.dones.resize(n);
  b.bootstrap.resize(size_t(E));

  std::vector<Rng> arng;
  arng.reserve(size_t(E));
  for (int e = 0; e < E; ++e) arng.emplace_back(mix_seed(seed, 0xac700 + uint64_t(e)));

  TensorF x({E, 3, R, R});
  AgentCacheT<float> cache;
  const float* ls = b.behavior_log_std.data();
  std::vector<float> sigma(static_cast<size_t>(A));
  for (int d = 0; d < A; ++d) sigma[size_t(d)] = std::exp(ls[d]);

  for (int t = 0; t < n_steps; ++t) {
    for (int e = 0; e < E; ++e)
      envs[size_t(e)].observation().write_float(x.data.data() + size_t(e) * obs_sz);
    actor_critic_forward_t(params, x, cache, use_prompt);

    for (int e = 0; e < E; ++e) {
      Env& env = envs[size_t(e)];
      const size_t i = size_t(e) * size_t(n_steps) + size_t(t);
      std::memcpy(b.obs.data() + i * obs_sz, env.observation().u8.data(), obs_sz);

      const float* mean_row = cache.mean.data.data() + size_t(e) * size_t(A);
      float* act_row = b.actions.data() + i * size_t(A);
      for (int d = 0; d < A; ++d)
        act_row[d] = mean_row[d] + sigma[size_t(d)] * float(arng[size_t(e)].normal());
      std::memcpy(b.behavior_mean.data() + i * size_t(A), mean_row, sizeof(float) * size_t(A));
      b.log_probs[i] = gaussian_head(mean_row, ls, act_row, A).log_prob;
      b.values[i] = cache.value.data[size_t(e)];

      const StepOut out = env.step(act_row[0], act_row[1]);
      b.rewards[i] = out.reward;
      b.dones[i] = out.done ? 1 : 0;
      if (out.done) {
        b.episode_returns.push_back(float(env.episode_return()));
        env.reset_random();
      }
    }
  }

  for (int e = 0; e < E; ++e)
    envs[size_t(e)].observation().write_float(x.data.data() + size_t(e) * obs_sz);
  actor_critic_forward_t(params, x, cache, use_prompt);
  for (int e = 0; e < E; ++e) b.bootstrap[size_t(e)] = cache.value.data[size_t(e)];
  return b;
}

namespace {

void gae_core(const float* rewards, const float* values, const uint8_t* dones, int n,
              float bootstrap_value, double gamma, double lam, float* advantages,
              float* returns) {
  double adv = 0.0;
  double next_v = bootstrap_value;
  for (int i = n - 1; i >= 0; --i) {
    const double nd = dones[i] ? 0.0 : 1.0;
    const double delta = double(rewards[i]) + gamma * next_v * nd - double(values[i]);
    adv = delta + gamma * lam * nd * adv;
    advantages[i] = float(adv);
    returns[i] = float(adv + double(values[i]));
    next_v = values[i];
  }
}

}  // namespace

void compute_gae(const std::vector<float>& rewards, const std::vector<float>& values,
                 const std::vector<uint8_t>& dones, float bootstrap_value, double gamma,
                 double lam, std::vector<float>& advantages, std::vector<float>& returns) {
  const size_t n = rewards.size();
  require(values.size() == n && dones.size() == n, "compute_gae: array lengths must match");
  require(n > 0, "compute_gae: empty series");
  advantages.resize(n);
  returns.resize(n);
  gae_core(rewards.data(), values.data(), dones.data(), int(n), bootstrap_value, gamma, lam,
           advantages.data(), returns.data());
}

void compute_gae_batch(RolloutBatch& batch, double gamma, double lam, bool normalize_adv) {
  const size_t n = size_t(batch.size());
  require(n > 0, "compute_gae_batch: empty batch");
  batch.advantages.resize(n);
  batch.returns.resize(n);
  for (int e = 0; e < batch.n_envs; ++e) {
    const size_t off = size_t(e) * size_t(batch.n_steps);
    gae_core(batch.rewards.data() + off, batch.values.data() + off, batch.dones.data() + off,
             batch.n_steps, batch.bootstrap[size_t(e)], gamma, lam,
             batch.advantages.data() + off, batch.returns.data() + off);
  }
  for (float a : batch.advantages) require(std::isfinite(a), "advantages must be finite");
  if (normalize_adv) {
    double mean = 0;
    for (float a : batch.advantages) mean += a;
    mean /= double(n);
    double var = 0;
    for (float a : batch.advantages) var += (a - mean) * (a - mean);
    var /= double(n);
    const double inv = 1.0 / (std::sqrt(var) + 1e-8);
    for (float& a : batch.advantages) a = float((a - mean) * inv);
  }
}

}  // namespace p3o
