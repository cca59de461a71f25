#include "p3o/ppo.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <deque>
#include <numeric>

#include "p3o/agent.hpp"
#include "p3o/kernels.hpp"

namespace p3o {

void PPOConfig::validate() const {
  require(clip_eps > 0 && clip_eps < 1, "ppo.clip_eps must be in (0,1)");
  require(gamma > 0 && gamma <= 1, "ppo.gamma must be in (0,1]");
  require(lam >= 0 && lam <= 1, "ppo.lam must be in [0,1]");
  require(epochs >= 1, "ppo.epochs must be >= 1");
  require(minibatch >= 1, "ppo.minibatch must be >= 1");
  require(n_steps >= 1 && n_envs >= 1, "ppo.n_steps and ppo.n_envs must be >= 1");
  require(int64_t(minibatch) <= int64_t(n_steps) * n_envs,
          "ppo.minibatch must not exceed the rollout length");
  require(lr > 0, "ppo.lr must be positive");
  require(value_coef >= 0 && entropy_coef >= 0, "ppo loss coefficients must be >= 0");
}

PPOLosses ppo_losses(const std::vector<float>& ratios, const std::vector<float>& advantages,
                     const std::vector<float>& new_values, const std::vector<float>& returns,
                     double clip_eps) {
  const size_t n = ratios.size();
  require(n > 0, "ppo_losses: empty batch");
  require(advantages.size() == n && new_values.size() == n && returns.size() == n,
          "ppo_losses: array lengths must match");
  PPOLosses out;
  for (size_t i = 0; i < n; ++i) {
    const double r = ratios[i];
    require(std::isfinite(r), "ppo_losses: non-finite ratio");
    const double a = advantages[i];
    const double u = r * a;
    const double c = clip(r, 1.0 - clip_eps, 1.0 + clip_eps) * a;
    out.policy += -std::min(u, c);
    const double dv = double(new_values[i]) - double(returns[i]);
    out.value += dv * dv;
  }
  out.policy /= double(n);
  out.value /= double(n);
  return out;
}

UpdateStats ppo_update(const RolloutBatch& batch, ParamStore& params, AdamState& adam, Stage stage,
                       const PPOConfig& cfg, uint64_t seed) {
  cfg.validate();
  const int64_t n = batch.size();
  const int B = cfg.minibatch;
  require(n > 0, "ppo_update: empty batch");
  require(int64_t(B) <= n, "ppo_update: minibatch larger than the batch");
  require(batch.advantages.size() == size_t(n) && batch.returns.size() == size_t(n),
          "ppo_update: advantages/returns missing (run compute_gae_batch first)");
  set_trainable(params, stage);
  const bool use_prompt = stage == Stage::step2;
  const bool train_value = params.at("value.fc.w").trainable;
  const int A = batch.action_dim;
  const int R = batch.obs_res;
  const size_t obs_sz = size_t(3) * R * R;

  Rng rng(mix_seed(seed, 0x50504f));
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), int64_t{0});

  TensorF x({B, 3, R, R});
  TensorF dmean({B, A});
  std::vector<float> dvalue(static_cast<size_t>(B));
  AgentCacheT<float> cache;
  auto& ls_entry = params.at("action.log_std");

  UpdateStats stats;
  int minibatches = 0;
  bool first_mb = true;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(idx);
    for (int64_t start = 0; start + B <= n; start += B) {
      for (int k = 0; k < B; ++k) {
        const int64_t i = idx[size_t(start + k)];
        const uint8_t* src = batch.obs.data() + size_t(i) * obs_sz;
        float* dst = x.data.data() + size_t(k) * obs_sz;
        for (size_t p = 0; p < obs_sz; ++p) dst[p] = float(src[p]) * (1.0f / 255.0f);
      }
      params.zero_grad();
      actor_critic_forward_t(params, x, cache, use_prompt);
      const float* ls = ls_entry.tensor.data.data();
      float* dls = ls_entry.trainable ? ls_entry.tensor.grad.data() : nullptr;

      double lp_sum = 0, lv_sum = 0, ent_sum = 0;
      int clip_ct = 0;
      double ratio_sum = 0, ratio_err = 0;
      for (int k = 0; k < B; ++k) {
        const int64_t i = idx[size_t(start + k)];
        const float* mean_row = cache.mean.data.data() + size_t(k) * size_t(A);
        const float* act_row = batch.actions.data() + size_t(i) * size_t(A);
        const GaussianOut<float> g = gaussian_head(mean_row, ls, act_row, A);
        const double ratio = std::exp(double(g.log_prob) - double(batch.log_probs[size_t(i)]));
        if (!std::isfinite(ratio))
          throw std::runtime_error(
              "ppo_update: non-finite ratio (log-prob drift) at sample " + std::to_string(i) +
              ": new_logp=" + std::to_string(g.log_prob) +
              " behavior_logp=" + std::to_string(batch.log_probs[size_t(i)]));
        const double adv = batch.advantages[size_t(i)];
        const double u = ratio * adv;
        const double c = clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
        lp_sum += -std::min(u, c);
        ent_sum += g.entropy;
        if (std::fabs(ratio - 1.0) > cfg.clip_eps) ++clip_ct;
        if (first_mb) {
          ratio_sum += ratio;
          ratio_err = std::max(ratio_err, std::fabs(ratio - 1.0));
        }
        const bool clip_active = (adv >= 0 && ratio > 1.0 + cfg.clip_eps) ||
                                 (adv < 0 && ratio < 1.0 - cfg.clip_eps);
        const double dlp = clip_active ? 0.0 : -adv * ratio / double(B);
        const double dent = -cfg.entropy_coef / double(B);

        const double v = cache.value.data[size_t(k)];
        const double dv = v - double(batch.returns[size_t(i)]);
        lv_sum += dv * dv;
        dvalue[size_t(k)] = train_value ? float(cfg.value_coef * 2.0 * dv / double(B)) : 0.0f;

        float* dmean_row = dmean.data.data() + size_t(k) * size_t(A);
        for (int d = 0; d < A; ++d) dmean_row[d] = 0.0f;
        gaussian_head_backward(mean_row, ls, act_row, A, float(dlp), float(dent), dmean_row, dls);
      }
      if (!std::isfinite(lp_sum) || !std::isfinite(lv_sum))
        throw std::runtime_error("ppo_update: non-finite loss (policy=" + std::to_string(lp_sum) +
                                 " value=" + std::to_string(lv_sum) + ")");
      actor_critic_backward_t(params, x, cache, dmean, dvalue, use_prompt);
      adam_step(params, adam, cfg.lr);
      if (ls_entry.trainable)
        for (auto& v : ls_entry.tensor.data) v = clamp_log_std(v);

      stats.policy_loss += lp_sum / B;
      stats.value_loss += lv_sum / B;
      stats.entropy += ent_sum / B;
      stats.clip_fraction += double(clip_ct) / B;
      if (first_mb) {
        stats.mean_ratio_first_minibatch = ratio_sum / B;
        stats.max_abs_ratio_err_first_minibatch = ratio_err;
        first_mb = false;
      }
      ++minibatches;
    }
  }
  stats.policy_loss /= minibatches;
  stats.value_loss /= minibatches;
  stats.entropy /= minibatches;
  stats.clip_fraction /= minibatches;
  return stats;
}

ParamStore train_ppo(Stage stage, std::vector<Env>& envs, ParamStore params, const PPOConfig& cfg,
                     int64_t budget_env_steps, uint64_t seed, const UpdateCallback& on_update,
                     const EvalCallback& on_eval, int eval_interval, const std::string& label) {
  cfg.validate();
  require(int(envs.size()) == cfg.n_envs, "train_ppo: env count must equal ppo.n_envs");
  require(eval_interval >= 1, "train_ppo: eval_interval must be >= 1");
  const int64_t per_update = int64_t(cfg.n_steps) * cfg.n_envs;
  const int64_t updates = budget_env_steps / per_update;
  require(updates >= 1, "train_ppo: budget smaller than one rollout");

  set_trainable(params, stage);
  AdamState adam = AdamState::init(params);
  for (auto& e : envs) e.reset_random();

  std::deque<float> recent;
  const auto t0 = std::chrono::steady_clock::now();
  for (int u = 1; u <= updates; ++u) {
    RolloutBatch batch =
        collect_rollouts(envs, params, stage == Stage::step2, cfg.n_steps, mix_seed(seed, uint64_t(u)));
    compute_gae_batch(batch, cfg.gamma, cfg.lam, cfg.normalize_adv);
    const UpdateStats st =
        ppo_update(batch, params, adam, stage, cfg, mix_seed(seed, 0x75700000 + uint64_t(u)));
    for (float r : batch.episode_returns) {
      recent.push_back(r);
      if (recent.size() > 10) recent.pop_front();
    }
    if (on_update) {
      UpdateRow row;
      row.stage = label.empty() ? stage_name(stage) : label;
      row.seed = seed;
      row.env_steps = per_update * u;
      row.update = u;
      row.mean_return =
          recent.empty() ? 0.0 : std::accumulate(recent.begin(), recent.end(), 0.0) / recent.size();
      row.policy_loss = st.policy_loss;
      row.value_loss = st.value_loss;
      row.entropy = st.entropy;
      row.clip_fraction = st.clip_fraction;
      row.wall_seconds =
          cfg.record_wall_time
              ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
              : 0.0;
      on_update(row);
    }
    if (on_eval && (u % eval_interval == 0 || u == updates)) {
      if (on_eval(params, per_update * u) && u < updates) break;
    }
  }
  return params;
}

}  // namespace p3o
