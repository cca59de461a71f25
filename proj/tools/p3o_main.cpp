#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "p3o/pipeline.hpp"
#include "p3o/report.hpp"

namespace {

p3o::RunConfig make_config(const std::string& config_path) {
  return config_path.empty() ? p3o::RunConfig{} : p3o::load_run_config(config_path);
}

void check_preset(const std::string& preset) {
  p3o::variant_preset(preset);  // throws with the valid list on a bad name
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"p3o: visual-transfer RL lab (PPO pretrain, imitation init, prompt tuning)"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", preset = "env1", mode = "ppo_scratch", ckpt, tag;
  uint64_t seed = 1;
  std::vector<std::string> runs;
  std::string eval_mode = "checkpoint";

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file (defaults when omitted)");
    sub->add_option("--seed", seed, "run seed")->capture_default_str();
    sub->add_option("--out", out_dir, "run directory")->capture_default_str();
  };

  CLI::App* c_config = app.add_subcommand("config", "print the fully resolved config");
  c_config->add_option("--config", config_path, "JSON config file (defaults when omitted)");

  CLI::App* c_pre = app.add_subcommand("pretrain", "PPO on env0 from scratch");
  add_common(c_pre);

  CLI::App* c_exp = app.add_subcommand("expert", "collect scripted-driver demonstrations");
  add_common(c_exp);
  c_exp->add_option("--env", preset, "variant preset (env0..env6)")->capture_default_str();

  CLI::App* c_s1 = app.add_subcommand("step1", "imitation init of the prompt tower");
  add_common(c_s1);
  c_s1->add_option("--env", preset, "target preset (env1..env6)")->capture_default_str();

  CLI::App* c_s2 = app.add_subcommand("step2", "prompt-only PPO on the target preset");
  add_common(c_s2);
  c_s2->add_option("--env", preset, "target preset (env1..env6)")->capture_default_str();

  CLI::App* c_bl = app.add_subcommand("baseline", "comparison runs at matched budgets");
  add_common(c_bl);
  c_bl->add_option("--env", preset, "target preset")->capture_default_str();
  c_bl->add_option("--mode", mode, "ppo_scratch|ppo_finetune|step1_only|step2_only|random")
      ->capture_default_str();

  CLI::App* c_ev = app.add_subcommand("eval", "evaluate a checkpoint or reference policy");
  add_common(c_ev);
  c_ev->add_option("--env", preset, "preset to evaluate on")->capture_default_str();
  c_ev->add_option("--ckpt", ckpt, "checkpoint path (for --mode checkpoint)");
  c_ev->add_option("--tag", tag, "eval_<tag>.json name (default from the checkpoint file)");
  c_ev->add_option("--mode", eval_mode, "checkpoint|expert|random_actions")
      ->capture_default_str();

  CLI::App* c_rep = app.add_subcommand("report", "tables from one run dir per seed");
  c_rep->add_option("--out", out_dir, "directory for report.txt/report.csv")
      ->capture_default_str();
  c_rep->add_option("--runs", runs, "run directories (one per seed)")->required()
      ->expected(-1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_config->parsed()) {
      std::cout << p3o::run_config_to_json(make_config(config_path));
      return 0;
    }
    if (c_rep->parsed()) {
      const p3o::Report rep = p3o::build_report(runs);
      p3o::write_report(rep, out_dir);
      std::cout << rep.transfer_table << rep.efficiency_table << rep.ablation_table;
      return 0;
    }

    p3o::Pipeline pipe(make_config(config_path), seed, out_dir);
    if (c_pre->parsed()) {
      pipe.pretrain();
      std::cout << "wrote " << pipe.path("pretrain.p3o") << "\n";
    } else if (c_exp->parsed()) {
      check_preset(preset);
      const auto& data = pipe.collect_expert(preset);
      std::cout << "dataset " << pipe.path("expert_" + preset + ".bin") << ": " << data.size()
                << " pairs\n";
    } else if (c_s1->parsed()) {
      check_preset(preset);
      const p3o::Step1Stats st = pipe.step1(preset);
      std::printf("step1 %s: %d epochs, train acc %.3f, holdout acc %.3f\n", preset.c_str(),
                  int(st.epoch_loss.size()),
                  st.epoch_accuracy.empty() ? 0.0 : st.epoch_accuracy.back(),
                  st.holdout_accuracy);
    } else if (c_s2->parsed()) {
      check_preset(preset);
      pipe.step2(preset);
      std::cout << "wrote " << pipe.path("step2_" + preset + ".p3o") << "\n";
    } else if (c_bl->parsed()) {
      check_preset(preset);
      pipe.baseline(mode, preset);
      std::cout << "baseline " << mode << " on " << preset << " done\n";
    } else if (c_ev->parsed()) {
      check_preset(preset);
      p3o::EvalResult r;
      std::string used_tag = tag;
      if (eval_mode == "expert") {
        r = pipe.eval_expert(preset);
        used_tag = "expert_" + preset;
      } else if (eval_mode == "random_actions") {
        r = pipe.eval_random_actions(preset);
        used_tag = "random_actions_" + preset;
      } else if (eval_mode == "checkpoint") {
        if (ckpt.empty()) throw std::invalid_argument("eval --mode checkpoint needs --ckpt");
        if (used_tag.empty()) {
          std::string stem = std::filesystem::path(ckpt).stem().string();
          used_tag = stem + "_" + preset;
        }
        r = pipe.eval_checkpoint(ckpt, preset, used_tag);
      } else {
        throw std::invalid_argument("unknown eval mode: " + eval_mode);
      }
      std::printf("eval %s on %s: mean %.1f std %.1f laps %.0f%% (%d episodes)\n",
                  used_tag.c_str(), preset.c_str(), r.mean_return, r.std_return,
                  100.0 * r.lap_fraction, int(r.episode_returns.size()));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
