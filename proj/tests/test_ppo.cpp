#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "doctest.h"
#include "p3o/agent.hpp"
#include "p3o/env.hpp"
#include "p3o/kernels.hpp"
#include "p3o/ppo.hpp"
#include "p3o/rng.hpp"
#include "p3o/rollout.hpp"

using namespace p3o;

namespace {

ArchConfig tiny_arch() {
  ArchConfig a;
  a.resolution = 46;
  a.conv_channels = {2, 3, 4, 5};
  a.latent_dim = 8;
  a.policy_hidden = 8;
  return a;
}

EnvConfig tiny_env_cfg() {
  EnvConfig c;
  c.resolution = 46;
  return c;
}

std::shared_ptr<const Track> test_track(uint64_t seed = 7) {
  return std::make_shared<const Track>(Track::build(make_track_spec(seed)));
}

std::vector<Env> make_envs(int n, int first_seed = 100) {
  auto track = test_track();
  std::vector<Env> envs;
  envs.reserve(size_t(n));
  for (int i = 0; i < n; ++i)
    envs.emplace_back(track, variant_preset("env0"), uint64_t(first_seed + i), tiny_env_cfg());
  return envs;
}

// Flatten every trainable-table entry (by name) into one float vector.
std::vector<float> snapshot(const ParamStore& params) {
  std::vector<float> out;
  for (const auto& e : params.entries()) out.insert(out.end(), e.tensor.data.begin(), e.tensor.data.end());
  return out;
}

// Non-recursive GAE reference: truncated suffix sums of one-step TD errors,
// cut after the first done in the chain. Independent of the production code's
// backward recursion.
void gae_oracle(const std::vector<float>& r, const std::vector<float>& v,
                const std::vector<uint8_t>& d, double boot, double gamma, double lam,
                std::vector<double>& adv, std::vector<double>& ret) {
  const int n = int(r.size());
  adv.assign(size_t(n), 0.0);
  ret.assign(size_t(n), 0.0);
  for (int t = 0; t < n; ++t) {
    double acc = 0.0, w = 1.0;
    for (int k = t; k < n; ++k) {
      const double vk1 = (k + 1 < n) ? double(v[size_t(k + 1)]) : boot;
      const double nd = d[size_t(k)] ? 0.0 : 1.0;
      const double delta = double(r[size_t(k)]) + gamma * vk1 * nd - double(v[size_t(k)]);
      acc += w * delta;
      if (d[size_t(k)]) break;
      w *= gamma * lam;
    }
    adv[size_t(t)] = acc;
    ret[size_t(t)] = acc + double(v[size_t(t)]);
  }
}

}  // namespace

TEST_CASE("gae anchors by hand") {
  // n=2, gamma=lam=0.5, boot=3:
  //   delta_1 = 2 + 0.5*3 - 1     = 2.5      A_1 = 2.5
  //   delta_0 = 1 + 0.5*1 - 0.5   = 1.0      A_0 = 1 + 0.25*2.5 = 1.625
  std::vector<float> r = {1.0f, 2.0f}, v = {0.5f, 1.0f};
  std::vector<uint8_t> d = {0, 0};
  std::vector<float> adv, ret;
  compute_gae(r, v, d, 3.0f, 0.5, 0.5, adv, ret);
  REQUIRE(adv.size() == 2);
  CHECK(adv[0] == doctest::Approx(1.625).epsilon(1e-7));
  CHECK(adv[1] == doctest::Approx(2.5).epsilon(1e-7));
  CHECK(ret[0] == doctest::Approx(2.125).epsilon(1e-7));
  CHECK(ret[1] == doctest::Approx(3.5).epsilon(1e-7));

  // A done at t=0 cuts both the bootstrap through v_1 and the lambda chain:
  //   delta_0 = 1 - 0.5 = 0.5, A_0 = 0.5; t=1 is untouched.
  d[0] = 1;
  compute_gae(r, v, d, 3.0f, 0.5, 0.5, adv, ret);
  CHECK(adv[0] == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(adv[1] == doctest::Approx(2.5).epsilon(1e-7));
  CHECK(ret[0] == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("gae matches the suffix-sum oracle on random data") {
  Rng rng(321);
  for (int trial = 0; trial < 20; ++trial) {
    const size_t n = size_t(3 + rng.uniform_int(80));
    std::vector<float> r(n), v(n);
    std::vector<uint8_t> d(n);
    for (size_t i = 0; i < n; ++i) {
      r[i] = float(rng.uniform(-2.0, 2.0));
      v[i] = float(rng.uniform(-2.0, 2.0));
      d[i] = rng.uniform(0.0, 1.0) < 0.2 ? 1 : 0;
    }
    const float boot = float(rng.uniform(-2.0, 2.0));
    const double gamma = rng.uniform(0.8, 1.0), lam = rng.uniform(0.0, 1.0);

    std::vector<float> adv, ret;
    compute_gae(r, v, d, boot, gamma, lam, adv, ret);
    std::vector<double> adv_o, ret_o;
    gae_oracle(r, v, d, boot, gamma, lam, adv_o, ret_o);
    for (size_t t = 0; t < n; ++t) {
      CHECK(std::abs(double(adv[t]) - adv_o[t]) < 1e-4);
      CHECK(std::abs(double(ret[t]) - ret_o[t]) < 1e-4);
    }
  }
}

TEST_CASE("ppo losses match a per-sample scalar oracle within 1e-9") {
  const size_t n = 1000;
  const double eps = 0.2;
  Rng rng(777);
  std::vector<float> ratios(n), adv(n), values(n), returns(n);
  for (size_t i = 0; i < n; ++i) {
    ratios[i] = float(std::exp(rng.uniform(-1.0, 1.0)));
    adv[i] = float(rng.uniform(-3.0, 3.0));
    values[i] = float(rng.uniform(-2.0, 2.0));
    returns[i] = float(rng.uniform(-2.0, 2.0));
  }

  double policy = 0.0, value = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double r = ratios[i], a = adv[i];
    const double lo = 1.0 - eps, hi = 1.0 + eps;
    const double rc = r < lo ? lo : (r > hi ? hi : r);
    policy += -std::min(r * a, rc * a);
    const double dv = double(values[i]) - double(returns[i]);
    value += dv * dv;
  }
  policy /= double(n);
  value /= double(n);

  const PPOLosses L = ppo_losses(ratios, adv, values, returns, eps);
  CHECK(std::abs(L.policy - policy) <= 1e-9);
  CHECK(std::abs(L.value - value) <= 1e-9);
}

TEST_CASE("ppo loss anchors") {
  // r=1.5, A=1, eps=0.2: surrogate min(1.5, 1.2) = 1.2, loss -1.2.
  PPOLosses L = ppo_losses({1.5f}, {1.0f}, {0.0f}, {0.0f}, 0.2);
  CHECK(L.policy == doctest::Approx(-1.2).epsilon(1e-12));
  // r=0.5, A=-1, eps=0.2: min(-0.5, -0.8) = -0.8, loss +0.8.
  L = ppo_losses({0.5f}, {-1.0f}, {0.0f}, {0.0f}, 0.2);
  CHECK(L.policy == doctest::Approx(0.8).epsilon(1e-12));
  // Interior ratio: clip inactive, loss = -r*A.
  L = ppo_losses({1.1f}, {2.0f}, {0.0f}, {0.0f}, 0.2);
  CHECK(L.policy == doctest::Approx(-2.2).epsilon(1e-6));
  // Value term: mean squared error against returns.
  L = ppo_losses({1.0f}, {0.0f}, {2.0f}, {0.5f}, 0.2);
  CHECK(L.value == doctest::Approx(2.25).epsilon(1e-12));

  CHECK_THROWS(ppo_losses({}, {}, {}, {}, 0.2));
  CHECK_THROWS(ppo_losses({1.0f, 1.0f}, {1.0f}, {1.0f}, {1.0f}, 0.2));
  const float inf = std::numeric_limits<float>::infinity();
  CHECK_THROWS(ppo_losses({inf}, {1.0f}, {0.0f}, {0.0f}, 0.2));
}

TEST_CASE("ppo config validation") {
  PPOConfig ok;
  CHECK_NOTHROW(ok.validate());

  PPOConfig c = ok;
  c.clip_eps = 0.0;
  CHECK_THROWS(c.validate());
  c = ok;
  c.clip_eps = 1.5;
  CHECK_THROWS(c.validate());
  c = ok;
  c.gamma = 0.0;
  CHECK_THROWS(c.validate());
  c = ok;
  c.lam = 1.2;
  CHECK_THROWS(c.validate());
  c = ok;
  c.epochs = 0;
  CHECK_THROWS(c.validate());
  c = ok;
  c.minibatch = 0;
  CHECK_THROWS(c.validate());
  c = ok;
  c.minibatch = c.n_steps * c.n_envs + 1;
  CHECK_THROWS(c.validate());
  c = ok;
  c.lr = 0.0;
  CHECK_THROWS(c.validate());
  c = ok;
  c.entropy_coef = -0.1;
  CHECK_THROWS(c.validate());
}

TEST_CASE("rollout collection layout and consistency") {
  const ArchConfig arch = tiny_arch();
  ParamStore params = build_agent(arch, 42);
  auto envs = make_envs(2);
  const int n_steps = 25;
  RolloutBatch b = collect_rollouts(envs, params, false, n_steps, 77);

  const int R = arch.resolution;
  const size_t n = size_t(b.size());
  REQUIRE(b.n_envs == 2);
  REQUIRE(b.n_steps == n_steps);
  REQUIRE(b.obs_res == R);
  REQUIRE(n == 50);
  CHECK(b.obs.size() == n * 3 * size_t(R) * size_t(R));
  CHECK(b.actions.size() == n * 2);
  CHECK(b.behavior_mean.size() == n * 2);
  CHECK(b.behavior_log_std.size() == 2);
  CHECK(b.log_probs.size() == n);
  CHECK(b.rewards.size() == n);
  CHECK(b.values.size() == n);
  CHECK(b.dones.size() == n);
  CHECK(b.bootstrap.size() == 2);
  CHECK(b.advantages.empty());
  CHECK(b.returns.empty());

  // Log-std was stored clamped.
  for (float ls : b.behavior_log_std) {
    CHECK(ls >= float(kLogStdMin));
    CHECK(ls <= float(kLogStdMax));
  }

  // Stored log-probs reproduce from the stored behavior distribution.
  for (size_t i = 0; i < n; ++i) {
    const auto g = gaussian_head<float>(b.behavior_mean.data() + i * 2, b.behavior_log_std.data(),
                                        b.actions.data() + i * 2, 2);
    CHECK(std::abs(g.log_prob - b.log_probs[i]) < 1e-5);
  }

  // Stored mean/value match a fresh single-sample forward on the stored obs.
  const size_t obs_sz = 3 * size_t(R) * size_t(R);
  TensorF obs({3, R, R});
  for (size_t i : {size_t(0), size_t(13), n - 1}) {
    const uint8_t* src = b.obs.data() + i * obs_sz;
    for (size_t p = 0; p < obs_sz; ++p) obs.data[p] = float(src[p]) * (1.0f / 255.0f);
    const PolicyEval pe = policy_eval(params, obs, false);
    CHECK(std::abs(pe.value - b.values[i]) < 1e-4);
    CHECK(std::abs(pe.mean[0] - b.behavior_mean[i * 2 + 0]) < 1e-4);
    CHECK(std::abs(pe.mean[1] - b.behavior_mean[i * 2 + 1]) < 1e-4);
  }

  // One completed-episode return per done transition.
  size_t done_count = 0;
  for (uint8_t d : b.dones) done_count += d;
  CHECK(b.episode_returns.size() == done_count);
  for (float er : b.episode_returns) CHECK(std::isfinite(er));

  // Same seed and fresh envs reproduce the batch bitwise; a different seed
  // moves the action noise.
  auto envs2 = make_envs(2);
  RolloutBatch b2 = collect_rollouts(envs2, params, false, n_steps, 77);
  CHECK(b.obs == b2.obs);
  CHECK(std::memcmp(b.actions.data(), b2.actions.data(), b.actions.size() * 4) == 0);
  CHECK(std::memcmp(b.rewards.data(), b2.rewards.data(), b.rewards.size() * 4) == 0);
  auto envs3 = make_envs(2);
  RolloutBatch b3 = collect_rollouts(envs3, params, false, n_steps, 78);
  CHECK(std::memcmp(b.actions.data(), b3.actions.data(), b.actions.size() * 4) != 0);
}

TEST_CASE("batch gae fills per-env and normalizes advantages only") {
  ParamStore params = build_agent(tiny_arch(), 42);
  auto envs = make_envs(2);
  RolloutBatch b = collect_rollouts(envs, params, false, 40, 11);

  RolloutBatch raw = b;
  compute_gae_batch(raw, 0.99, 0.95, false);
  compute_gae_batch(b, 0.99, 0.95, true);

  // Unnormalized advantages agree with the single-env routine on each slice.
  for (int e = 0; e < 2; ++e) {
    const size_t off = size_t(e) * 40;
    std::vector<float> r(raw.rewards.begin() + off, raw.rewards.begin() + off + 40);
    std::vector<float> v(raw.values.begin() + off, raw.values.begin() + off + 40);
    std::vector<uint8_t> d(raw.dones.begin() + off, raw.dones.begin() + off + 40);
    std::vector<float> adv, ret;
    compute_gae(r, v, d, raw.bootstrap[size_t(e)], 0.99, 0.95, adv, ret);
    for (size_t t = 0; t < 40; ++t) {
      CHECK(adv[t] == doctest::Approx(raw.advantages[off + t]).epsilon(1e-6));
      CHECK(ret[t] == doctest::Approx(raw.returns[off + t]).epsilon(1e-6));
    }
  }

  // Normalization standardizes advantages and leaves returns untouched.
  double mean = 0.0;
  for (float a : b.advantages) mean += a;
  mean /= double(b.advantages.size());
  double var = 0.0;
  for (float a : b.advantages) var += (a - mean) * (a - mean);
  var /= double(b.advantages.size());
  CHECK(std::abs(mean) < 1e-4);
  CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(b.returns == raw.returns);
}

TEST_CASE("on-policy update starts at unit ratios") {
  ParamStore params = build_agent(tiny_arch(), 42);
  auto envs = make_envs(2);
  RolloutBatch b = collect_rollouts(envs, params, false, 25, 5);
  compute_gae_batch(b, 0.99, 0.95, true);

  PPOConfig cfg;
  cfg.n_envs = 2;
  cfg.n_steps = 25;
  cfg.minibatch = 50;
  cfg.epochs = 1;
  cfg.lr = 1e-4;

  AdamState adam;
  UpdateStats stats = ppo_update(b, params, adam, Stage::pretrain, cfg, 9);
  // The first minibatch re-evaluates the collection policy on the collection
  // observations, so every ratio is 1 up to float forward reproducibility.
  CHECK(std::abs(stats.mean_ratio_first_minibatch - 1.0) < 1e-4);
  CHECK(stats.max_abs_ratio_err_first_minibatch < 1e-4);
  CHECK(stats.clip_fraction == 0.0);
  CHECK(std::isfinite(stats.policy_loss));
  CHECK(std::isfinite(stats.value_loss));
  CHECK(stats.entropy > 0.0);  // fresh policy keeps log_std near 0

  // GAE must be run first.
  RolloutBatch empty_adv = collect_rollouts(envs, params, false, 25, 6);
  AdamState adam2;
  CHECK_THROWS(ppo_update(empty_adv, params, adam2, Stage::pretrain, cfg, 9));
}

TEST_CASE("step-2 update moves only the prompt tower") {
  const ArchConfig arch = tiny_arch();
  ParamStore params = build_agent(arch, 42);
  add_prompt_t(params, arch, 43, false);

  auto envs = make_envs(2);
  RolloutBatch b = collect_rollouts(envs, params, true, 25, 5);
  compute_gae_batch(b, 0.99, 0.95, true);

  std::vector<std::string> frozen, moving;
  for (const auto& e : params.entries()) {
    if (e.name.rfind("prompt.", 0) == 0)
      moving.push_back(e.name);
    else
      frozen.push_back(e.name);
  }
  REQUIRE(!moving.empty());
  std::vector<std::vector<float>> before;
  for (const auto& name : frozen) before.push_back(params.at(name).tensor.data);
  std::vector<std::vector<float>> prompt_before;
  for (const auto& name : moving) prompt_before.push_back(params.at(name).tensor.data);

  PPOConfig cfg;
  cfg.n_envs = 2;
  cfg.n_steps = 25;
  cfg.minibatch = 25;
  cfg.epochs = 2;
  AdamState adam;
  ppo_update(b, params, adam, Stage::step2, cfg, 9);

  for (size_t i = 0; i < frozen.size(); ++i) {
    const auto& now = params.at(frozen[i]).tensor.data;
    CHECK(std::memcmp(now.data(), before[i].data(), now.size() * 4) == 0);
  }
  bool any_moved = false;
  for (size_t i = 0; i < moving.size(); ++i)
    if (params.at(moving[i]).tensor.data != prompt_before[i]) any_moved = true;
  CHECK(any_moved);
}

TEST_CASE("micro training run emits one row per update and is repeatable") {
  const ArchConfig arch = tiny_arch();
  ParamStore params = build_agent(arch, 42);

  PPOConfig cfg;
  cfg.n_envs = 2;
  cfg.n_steps = 16;
  cfg.minibatch = 16;
  cfg.epochs = 2;
  cfg.record_wall_time = false;

  auto run = [&](const std::string& label, std::vector<UpdateRow>& rows) {
    auto envs = make_envs(2);
    rows.clear();
    return train_ppo(Stage::pretrain, envs, params, cfg, 96, 31,
                     [&](const UpdateRow& r) { rows.push_back(r); }, nullptr, 5, label);
  };

  std::vector<UpdateRow> rows;
  ParamStore trained = run("", rows);
  REQUIRE(rows.size() == 3);  // floor(96 / 32) updates
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].stage == "pretrain");
    CHECK(rows[i].seed == 31);
    CHECK(rows[i].update == int(i) + 1);
    CHECK(rows[i].env_steps == int64_t(32 * (i + 1)));
    CHECK(rows[i].wall_seconds == 0.0);
    CHECK(std::isfinite(rows[i].mean_return));
  }
  // Params are taken by value: the caller's copy is untouched, the result moved.
  CHECK(snapshot(params) == snapshot(build_agent(arch, 42)));
  CHECK(snapshot(trained) != snapshot(params));

  std::vector<UpdateRow> rows2;
  ParamStore trained2 = run("ppo_scratch", rows2);
  CHECK(rows2[0].stage == "ppo_scratch");
  CHECK(snapshot(trained2) == snapshot(trained));
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].policy_loss == rows2[i].policy_loss);
    CHECK(rows[i].value_loss == rows2[i].value_loss);
    CHECK(rows[i].mean_return == rows2[i].mean_return);
  }

  // Eval callback cadence: every eval_interval updates; returning true stops.
  std::vector<int64_t> eval_steps;
  auto envs = make_envs(2);
  train_ppo(Stage::pretrain, envs, params, cfg, 96, 31, nullptr,
            [&](const ParamStore&, int64_t s) {
              eval_steps.push_back(s);
              return false;
            },
            2);
  REQUIRE(eval_steps.size() == 2);  // update 2 and the final update 3
  CHECK(eval_steps[0] == 64);
  CHECK(eval_steps[1] == 96);

  std::vector<UpdateRow> rows3;
  auto envs2 = make_envs(2);
  train_ppo(Stage::pretrain, envs2, params, cfg, 96, 31,
            [&](const UpdateRow& r) { rows3.push_back(r); },
            [&](const ParamStore&, int64_t) { return true; }, 2);
  CHECK(rows3.size() == 2);  // early stop after the update-2 eval
}
