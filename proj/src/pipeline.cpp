#include "p3o/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "p3o/expert.hpp"
#include "p3o/metrics.hpp"
#include "p3o/ppo.hpp"

namespace p3o {

double transfer_ratio(double target_mean, double source_mean) {
  require(source_mean > 0, "transfer ratio needs a positive source-environment score");
  return target_mean / source_mean;
}

const std::vector<std::string>& baseline_modes() {
  static const std::vector<std::string> modes = {"ppo_scratch", "ppo_finetune", "step1_only",
                                                 "step2_only", "random"};
  return modes;
}

namespace {

EvalResult summarize(std::vector<double> returns, int laps) {
  EvalResult r;
  r.episode_returns = std::move(returns);
  const double n = double(r.episode_returns.size());
  for (double v : r.episode_returns) r.mean_return += v;
  r.mean_return /= n;
  for (double v : r.episode_returns) r.std_return += (v - r.mean_return) * (v - r.mean_return);
  r.std_return = std::sqrt(r.std_return / n);
  r.lap_fraction = double(laps) / n;
  return r;
}

}  // namespace

Pipeline::Pipeline(RunConfig cfg, uint64_t seed, std::string out_dir)
    : cfg_(std::move(cfg)), seed_(seed), dir_(std::move(out_dir)) {
  cfg_.validate();
  require(!dir_.empty(), "output directory must not be empty");
  std::filesystem::create_directories(dir_);
  {
    std::ofstream f(path("config.json"), std::ios::trunc);
    require(f.good(), "cannot write config echo");
    f << run_config_to_json(cfg_);
  }
  track_ = std::make_shared<const Track>(Track::build(make_track_spec(cfg_.track_seed, cfg_.track)));
  eval_seed_ = mix_seed(seed_, 0xe7a1);
}

std::string Pipeline::path(const std::string& file) const {
  return (std::filesystem::path(dir_) / file).string();
}

std::vector<Env> Pipeline::make_envs(const std::string& preset, uint64_t stream) {
  const VariantSpec variant = variant_preset(preset);
  std::vector<Env> envs;
  envs.reserve(size_t(cfg_.ppo.n_envs));
  for (int i = 0; i < cfg_.ppo.n_envs; ++i)
    envs.emplace_back(track_, variant, mix_seed(mix_seed(seed_, stream), uint64_t(i)), cfg_.env);
  return envs;
}

ParamStore Pipeline::load_stage(const std::string& file, Stage expect) const {
  ParamStore params;
  const CheckpointMeta meta = load_checkpoint(path(file), params);
  require(meta.stage == expect, file + " holds a " + stage_name(meta.stage) +
                                    " checkpoint, expected " + stage_name(expect));
  return params;
}

EvalResult Pipeline::evaluate(const ParamStore& params, bool use_prompt, const std::string& preset,
                              int episodes) const {
  require(episodes >= 1, "evaluate: episodes must be positive");
  Env env(track_, variant_preset(preset), eval_seed_, cfg_.env);
  Rng arng(mix_seed(eval_seed_, 0x3e11));
  const int R = cfg_.env.resolution;
  TensorF obs({1, 3, R, R});
  std::vector<double> returns;
  int laps = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    env.reset_random();
    while (!env.done()) {
      env.observation().write_float(obs.data.data());
      const PolicyEval pe = policy_eval(params, obs, use_prompt);
      float steer = pe.mean[0], throttle = pe.mean[1];
      if (!cfg_.eval.deterministic) {
        steer += std::exp(pe.log_std[0]) * float(arng.normal());
        throttle += std::exp(pe.log_std[1]) * float(arng.normal());
      }
      env.step(steer, throttle);
    }
    returns.push_back(env.episode_return());
    laps += env.lap_complete() ? 1 : 0;
  }
  return summarize(std::move(returns), laps);
}

void Pipeline::write_eval_json(const std::string& tag, const std::string& preset,
                               const std::string& mode, bool use_prompt,
                               const EvalResult& r) const {
  nlohmann::json j;
  j["tag"] = tag;
  j["preset"] = preset;
  j["mode"] = mode;
  j["seed"] = seed_;
  j["use_prompt"] = use_prompt;
  j["episodes"] = int(r.episode_returns.size());
  j["deterministic"] = cfg_.eval.deterministic;
  j["mean_return"] = r.mean_return;
  j["std_return"] = r.std_return;
  j["lap_fraction"] = r.lap_fraction;
  j["episode_returns"] = r.episode_returns;
  std::ofstream f(path("eval_" + tag + ".json"), std::ios::trunc);
  require(f.good(), "cannot write eval json for " + tag);
  f << j.dump(2) << "\n";
}

void Pipeline::pretrain() {
  ParamStore params = build_agent(cfg_.arch, mix_seed(seed_, 0x1417));
  auto envs = make_envs("env0", 0xe0);
  MetricsSink metrics(path("metrics.csv"), true);
  EvalSink evals(path("evals.csv"), true);

  const EvalResult expert_train = evaluate_expert_internal("env0", cfg_.eval.train_episodes);
  const double stop_at = cfg_.pretrain.early_stop_fraction > 0
                             ? cfg_.pretrain.early_stop_fraction * expert_train.mean_return
                             : std::numeric_limits<double>::infinity();

  const UpdateCallback on_update = [&](const UpdateRow& row) {
    UpdateRow r = row;
    r.seed = seed_;  // metrics carry the run seed, not the internal stream
    metrics.write_row(r);
  };
  const EvalCallback on_eval = [&](const ParamStore& p, int64_t steps) {
    const EvalResult r = evaluate(p, false, "env0", cfg_.eval.train_episodes);
    evals.write_row("pretrain", seed_, steps, r.mean_return);
    return r.mean_return >= stop_at;
  };
  params = train_ppo(Stage::pretrain, envs, std::move(params), ppo_with_lr(cfg_, cfg_.pretrain.lr),
                     cfg_.pretrain.budget, mix_seed(seed_, 0x9e70), on_update, on_eval,
                     cfg_.pretrain.eval_interval);
  save_checkpoint(path("pretrain.p3o"), params, {Stage::pretrain, "env0", seed_, cfg_.arch});
  write_eval_json("pretrain_env0", "env0", "pretrain", false,
                  evaluate(params, false, "env0", cfg_.eval.episodes));
}

const ExpertDataset& Pipeline::collect_expert(const std::string& preset) {
  const std::string file = path("expert_" + preset + ".bin");
  if (std::filesystem::exists(file)) {
    dataset_ = std::make_unique<ExpertDataset>(load_dataset(file));
    require(dataset_->preset == preset && dataset_->resolution == cfg_.env.resolution,
            "cached dataset " + file + " does not match this config");
  } else {
    dataset_ = std::make_unique<ExpertDataset>(
        collect_expert_dataset(track_, preset, cfg_.imitation.sets, cfg_.imitation.pairs_per_set,
                               mix_seed(seed_, 0xda7a), cfg_.env, cfg_.expert));
    save_dataset(*dataset_, file);
  }
  return *dataset_;
}

Step1Stats Pipeline::step1(const std::string& preset) {
  ParamStore params = load_stage("pretrain.p3o", Stage::pretrain);
  add_prompt(params, cfg_.arch, mix_seed(seed_, 0x9095), cfg_.imitation.prompt_init == "copy");
  add_classifier(params, cfg_.arch, mix_seed(seed_, 0xc1a55));

  const ExpertDataset& data = collect_expert(preset);
  Step1Config sc;
  sc.epochs = cfg_.imitation.epochs;
  sc.lr = cfg_.imitation.lr;
  sc.batch = cfg_.imitation.batch;
  sc.holdout = cfg_.imitation.holdout;
  sc.target_accuracy = cfg_.imitation.target_accuracy;
  const Step1Stats stats = train_step1(data, params, sc, mix_seed(seed_, 0x5731));

  save_checkpoint(path("step1_" + preset + ".p3o"), params,
                  {Stage::step1, preset, seed_, cfg_.arch});
  nlohmann::json j;
  j["preset"] = preset;
  j["seed"] = seed_;
  j["epochs_run"] = int(stats.epoch_loss.size());
  j["epoch_loss"] = stats.epoch_loss;
  j["epoch_accuracy"] = stats.epoch_accuracy;
  j["holdout_ce"] = stats.holdout_ce;
  j["holdout_accuracy"] = stats.holdout_accuracy;
  std::ofstream f(path("step1_" + preset + ".json"), std::ios::trunc);
  require(f.good(), "cannot write step1 stats");
  f << j.dump(2) << "\n";
  return stats;
}

void Pipeline::step2(const std::string& preset) {
  ParamStore params = load_stage("step1_" + preset + ".p3o", Stage::step1);
  params.remove_component(Component::classifier);
  auto envs = make_envs(preset, 0x5732);
  MetricsSink metrics(path("metrics.csv"), true);
  EvalSink evals(path("evals.csv"), true);
  const std::string label = "step2_" + preset;

  const UpdateCallback on_update = [&](const UpdateRow& row) {
    UpdateRow r = row;
    r.seed = seed_;  // metrics carry the run seed, not the internal stream
    metrics.write_row(r);
  };
  const EvalCallback on_eval = [&](const ParamStore& p, int64_t steps) {
    evals.write_row(label, seed_, steps,
                    evaluate(p, true, preset, cfg_.eval.train_episodes).mean_return);
    return false;
  };
  params = train_ppo(Stage::step2, envs, std::move(params), ppo_with_lr(cfg_, cfg_.step2.lr),
                     cfg_.step2.budget, mix_seed(seed_, 0x5742), on_update, on_eval,
                     cfg_.step2.eval_interval, label);
  save_checkpoint(path("step2_" + preset + ".p3o"), params,
                  {Stage::step2, preset, seed_, cfg_.arch});
  write_eval_json("step2_" + preset, preset, "step2", true,
                  evaluate(params, true, preset, cfg_.eval.episodes));
}

void Pipeline::baseline(const std::string& mode, const std::string& preset) {
  const std::string tag = mode + "_" + preset;
  if (mode == "step1_only") {
    ParamStore params = load_stage("step1_" + preset + ".p3o", Stage::step1);
    params.remove_component(Component::classifier);
    write_eval_json(tag, preset, mode, true, evaluate(params, true, preset, cfg_.eval.episodes));
    return;
  }
  if (mode == "random") {
    const ParamStore params = build_agent(cfg_.arch, mix_seed(seed_, 0x7a2d));
    write_eval_json(tag, preset, mode, false, evaluate(params, false, preset, cfg_.eval.episodes));
    return;
  }

  ParamStore params;
  Stage stage{};
  TransferConfig tc;
  uint64_t env_stream = 0, train_stream = 0;
  if (mode == "ppo_scratch") {
    params = build_agent(cfg_.arch, mix_seed(seed_, 0x5c7a));
    stage = Stage::pretrain;
    tc = cfg_.scratch;
    env_stream = 0x5c7b;
    train_stream = 0x5c7c;
  } else if (mode == "ppo_finetune") {
    params = load_stage("pretrain.p3o", Stage::pretrain);
    stage = Stage::finetune;
    tc = cfg_.finetune;
    env_stream = 0xf17e;
    train_stream = 0xf17f;
  } else if (mode == "step2_only") {
    params = load_stage("pretrain.p3o", Stage::pretrain);
    // Same prompt init as step1 would use, minus the imitation phase.
    add_prompt(params, cfg_.arch, mix_seed(seed_, 0x9095), cfg_.imitation.prompt_init == "copy");
    stage = Stage::step2;
    tc = cfg_.step2;
    env_stream = 0x5201;
    train_stream = 0x5202;
  } else {
    require(false, "unknown baseline mode: " + mode);
  }

  const bool use_prompt = stage == Stage::step2;
  auto envs = make_envs(preset, env_stream);
  MetricsSink metrics(path("metrics.csv"), true);
  EvalSink evals(path("evals.csv"), true);
  const std::string label = tag;
  const UpdateCallback on_update = [&](const UpdateRow& row) {
    UpdateRow r = row;
    r.seed = seed_;  // metrics carry the run seed, not the internal stream
    metrics.write_row(r);
  };
  const EvalCallback on_eval = [&](const ParamStore& p, int64_t steps) {
    evals.write_row(label, seed_, steps,
                    evaluate(p, use_prompt, preset, cfg_.eval.train_episodes).mean_return);
    return false;
  };
  params = train_ppo(stage, envs, std::move(params), ppo_with_lr(cfg_, tc.lr), tc.budget,
                     mix_seed(seed_, train_stream), on_update, on_eval, tc.eval_interval, label);
  save_checkpoint(path("baseline_" + tag + ".p3o"), params, {stage, preset, seed_, cfg_.arch});
  write_eval_json(tag, preset, mode, use_prompt,
                  evaluate(params, use_prompt, preset, cfg_.eval.episodes));
}

EvalResult Pipeline::eval_checkpoint(const std::string& ckpt_file, const std::string& preset,
                                     const std::string& tag) {
  ParamStore params;
  load_checkpoint(ckpt_file, params);
  if (params.has_component(Component::classifier)) params.remove_component(Component::classifier);
  const bool use_prompt = params.has_component(Component::prompt);
  const EvalResult r = evaluate(params, use_prompt, preset, cfg_.eval.episodes);
  write_eval_json(tag, preset, "checkpoint", use_prompt, r);
  return r;
}

EvalResult Pipeline::evaluate_expert_internal(const std::string& preset, int episodes) const {
  Env env(track_, variant_preset(preset), eval_seed_, cfg_.env);
  std::vector<double> returns;
  int laps = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    env.reset_random();
    while (!env.done()) {
      const auto a = expert_action(env.car(), *track_, cfg_.env, cfg_.expert);
      env.step(a[0], a[1]);
    }
    returns.push_back(env.episode_return());
    laps += env.lap_complete() ? 1 : 0;
  }
  return summarize(std::move(returns), laps);
}

EvalResult Pipeline::eval_expert(const std::string& preset) {
  const EvalResult r = evaluate_expert_internal(preset, cfg_.eval.episodes);
  write_eval_json("expert_" + preset, preset, "expert", false, r);
  return r;
}

EvalResult Pipeline::eval_random_actions(const std::string& preset) {
  Env env(track_, variant_preset(preset), eval_seed_, cfg_.env);
  Rng arng(mix_seed(eval_seed_, 0x7a7d));
  std::vector<double> returns;
  int laps = 0;
  for (int ep = 0; ep < cfg_.eval.episodes; ++ep) {
    env.reset_random();
    while (!env.done())
      env.step(float(arng.uniform(-1.0, 1.0)), float(arng.uniform(0.0, 1.0)));
    returns.push_back(env.episode_return());
    laps += env.lap_complete() ? 1 : 0;
  }
  const EvalResult r = summarize(std::move(returns), laps);
  write_eval_json("random_actions_" + preset, preset, "random_actions", false, r);
  return r;
}

}  // namespace p3o
