#include "p3o/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "p3o/tensor.hpp"

namespace p3o {

namespace {

using nlohmann::json;

// Strict section reader: every key must be claimed by a getter, leftovers are
// reported with their dotted path.
class Section {
 public:
  Section(const json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ != nullptr)
      require(j_->is_object(), path_ + " must be a JSON object");
  }

  const json* child(const char* key) {
    if (j_ == nullptr) return nullptr;
    claimed_.insert(key);
    auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }

  void num(const char* key, double& out) {
    if (const json* v = field(key)) {
      require(v->is_number(), path_ + "." + key + " must be a number");
      out = v->get<double>();
    }
  }
  void integer(const char* key, int& out) {
    if (const json* v = field(key)) {
      require(v->is_number_integer(), path_ + "." + key + " must be an integer");
      out = v->get<int>();
    }
  }
  void integer(const char* key, int64_t& out) {
    if (const json* v = field(key)) {
      require(v->is_number_integer(), path_ + "." + key + " must be an integer");
      out = v->get<int64_t>();
    }
  }
  void unsigned_integer(const char* key, uint64_t& out) {
    if (const json* v = field(key)) {
      require(v->is_number_integer() && !(v->is_number_integer() && v->get<int64_t>() < 0),
              path_ + "." + key + " must be a non-negative integer");
      out = v->get<uint64_t>();
    }
  }
  void boolean(const char* key, bool& out) {
    if (const json* v = field(key)) {
      require(v->is_boolean(), path_ + "." + key + " must be a boolean");
      out = v->get<bool>();
    }
  }
  void str(const char* key, std::string& out) {
    if (const json* v = field(key)) {
      require(v->is_string(), path_ + "." + key + " must be a string");
      out = v->get<std::string>();
    }
  }
  void int_array4(const char* key, std::array<int, 4>& out) {
    if (const json* v = field(key)) {
      require(v->is_array() && v->size() == 4, path_ + "." + key + " must be an array of 4 ints");
      for (size_t i = 0; i < 4; ++i) {
        require((*v)[i].is_number_integer(), path_ + "." + key + " must be an array of 4 ints");
        out[i] = (*v)[i].get<int>();
      }
    }
  }

  void finish() {
    if (j_ == nullptr) return;
    for (const auto& item : j_->items())
      require(claimed_.count(item.key()) > 0, "unknown config key: " + path_ + "." + item.key());
  }

 private:
  const json* field(const char* key) {
    if (j_ == nullptr) return nullptr;
    claimed_.insert(key);
    auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }

  const json* j_;
  std::string path_;
  std::set<std::string> claimed_;
};

void parse_arch(const json* j, ArchConfig& a) {
  Section s(j, "arch");
  s.integer("resolution", a.resolution);
  s.integer("in_channels", a.in_channels);
  s.int_array4("conv_channels", a.conv_channels);
  s.integer("latent_dim", a.latent_dim);
  s.integer("policy_hidden", a.policy_hidden);
  s.integer("action_dim", a.action_dim);
  s.integer("num_classes", a.num_classes);
  s.finish();
}

void parse_track(const json* j, uint64_t& seed, TrackGenConfig& t) {
  Section s(j, "track");
  s.unsigned_integer("seed", seed);
  s.num("base_radius", t.base_radius);
  s.num("radial_amplitude", t.radial_amplitude);
  s.integer("control_points", t.control_points);
  s.num("half_width", t.half_width);
  s.finish();
}

void parse_env(const json* j, EnvConfig& e) {
  Section s(j, "env");
  s.num("dt", e.dt);
  s.num("wheelbase", e.wheelbase);
  s.num("v_max", e.v_max);
  s.num("accel_gain", e.accel_gain);
  s.num("drag", e.drag);
  s.num("steer_max", e.steer_max);
  s.num("steer_rate", e.steer_rate);
  s.num("offroad_factor", e.offroad_factor);
  s.num("offroad_penalty", e.offroad_penalty);
  s.num("step_cost", e.step_cost);
  s.num("progress_scale", e.progress_scale);
  s.integer("max_steps", e.max_steps);
  s.integer("resolution", e.resolution);
  s.num("view_extent", e.view_extent);
  s.num("car_length", e.car_length);
  s.num("car_width", e.car_width);
  s.finish();
}

void parse_ppo(const json* j, PPOConfig& p) {
  Section s(j, "ppo");
  s.num("clip_eps", p.clip_eps);
  s.num("gamma", p.gamma);
  s.num("lam", p.lam);
  s.integer("epochs", p.epochs);
  s.integer("minibatch", p.minibatch);
  s.integer("n_steps", p.n_steps);
  s.integer("n_envs", p.n_envs);
  s.num("value_coef", p.value_coef);
  s.num("entropy_coef", p.entropy_coef);
  s.boolean("normalize_adv", p.normalize_adv);
  s.finish();
}

void parse_pretrain(const json* j, PretrainConfig& p) {
  Section s(j, "pretrain");
  s.num("lr", p.lr);
  s.integer("budget", p.budget);
  s.integer("eval_interval", p.eval_interval);
  s.num("early_stop_fraction", p.early_stop_fraction);
  s.finish();
}

void parse_transfer(const json* j, const char* name, TransferConfig& t) {
  Section s(j, name);
  s.num("lr", t.lr);
  s.integer("budget", t.budget);
  s.integer("eval_interval", t.eval_interval);
  s.finish();
}

void parse_imitation(const json* j, ImitationConfig& im) {
  Section s(j, "imitation");
  s.integer("sets", im.sets);
  s.integer("pairs_per_set", im.pairs_per_set);
  s.integer("epochs", im.epochs);
  s.num("lr", im.lr);
  s.integer("batch", im.batch);
  s.num("holdout", im.holdout);
  s.num("target_accuracy", im.target_accuracy);
  s.str("prompt_init", im.prompt_init);
  s.finish();
}

void parse_eval(const json* j, EvalRunConfig& e) {
  Section s(j, "eval");
  s.integer("episodes", e.episodes);
  s.integer("train_episodes", e.train_episodes);
  s.boolean("deterministic", e.deterministic);
  s.finish();
}

void parse_expert(const json* j, ExpertConfig& e) {
  Section s(j, "expert");
  s.num("lookahead", e.lookahead);
  s.num("lat_accel_max", e.lat_accel_max);
  s.num("curv_window", e.curv_window);
  s.num("v_min", e.v_min);
  s.num("speed_kp", e.speed_kp);
  s.finish();
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  const json j = json::parse(json_text, nullptr, false);
  require(!j.is_discarded(), "config is not valid JSON");
  require(j.is_object(), "config root must be a JSON object");

  RunConfig cfg;
  Section root(&j, "config");
  parse_arch(root.child("arch"), cfg.arch);
  parse_track(root.child("track"), cfg.track_seed, cfg.track);
  parse_env(root.child("env"), cfg.env);
  parse_ppo(root.child("ppo"), cfg.ppo);
  parse_pretrain(root.child("pretrain"), cfg.pretrain);
  parse_transfer(root.child("step2"), "step2", cfg.step2);
  parse_transfer(root.child("finetune"), "finetune", cfg.finetune);
  parse_transfer(root.child("scratch"), "scratch", cfg.scratch);
  parse_imitation(root.child("imitation"), cfg.imitation);
  parse_eval(root.child("eval"), cfg.eval);
  parse_expert(root.child("expert"), cfg.expert);
  root.boolean("strict_repro", cfg.strict_repro);
  root.finish();

  cfg.ppo.record_wall_time = !cfg.strict_repro;
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["arch"]["resolution"] = cfg.arch.resolution;
  j["arch"]["in_channels"] = cfg.arch.in_channels;
  j["arch"]["conv_channels"] = cfg.arch.conv_channels;
  j["arch"]["latent_dim"] = cfg.arch.latent_dim;
  j["arch"]["policy_hidden"] = cfg.arch.policy_hidden;
  j["arch"]["action_dim"] = cfg.arch.action_dim;
  j["arch"]["num_classes"] = cfg.arch.num_classes;
  j["track"]["seed"] = cfg.track_seed;
  j["track"]["base_radius"] = cfg.track.base_radius;
  j["track"]["radial_amplitude"] = cfg.track.radial_amplitude;
  j["track"]["control_points"] = cfg.track.control_points;
  j["track"]["half_width"] = cfg.track.half_width;
  j["env"]["dt"] = cfg.env.dt;
  j["env"]["wheelbase"] = cfg.env.wheelbase;
  j["env"]["v_max"] = cfg.env.v_max;
  j["env"]["accel_gain"] = cfg.env.accel_gain;
  j["env"]["drag"] = cfg.env.drag;
  j["env"]["steer_max"] = cfg.env.steer_max;
  j["env"]["steer_rate"] = cfg.env.steer_rate;
  j["env"]["offroad_factor"] = cfg.env.offroad_factor;
  j["env"]["offroad_penalty"] = cfg.env.offroad_penalty;
  j["env"]["step_cost"] = cfg.env.step_cost;
  j["env"]["progress_scale"] = cfg.env.progress_scale;
  j["env"]["max_steps"] = cfg.env.max_steps;
  j["env"]["resolution"] = cfg.env.resolution;
  j["env"]["view_extent"] = cfg.env.view_extent;
  j["env"]["car_length"] = cfg.env.car_length;
  j["env"]["car_width"] = cfg.env.car_width;
  j["ppo"]["clip_eps"] = cfg.ppo.clip_eps;
  j["ppo"]["gamma"] = cfg.ppo.gamma;
  j["ppo"]["lam"] = cfg.ppo.lam;
  j["ppo"]["epochs"] = cfg.ppo.epochs;
  j["ppo"]["minibatch"] = cfg.ppo.minibatch;
  j["ppo"]["n_steps"] = cfg.ppo.n_steps;
  j["ppo"]["n_envs"] = cfg.ppo.n_envs;
  j["ppo"]["value_coef"] = cfg.ppo.value_coef;
  j["ppo"]["entropy_coef"] = cfg.ppo.entropy_coef;
  j["ppo"]["normalize_adv"] = cfg.ppo.normalize_adv;
  j["pretrain"]["lr"] = cfg.pretrain.lr;
  j["pretrain"]["budget"] = cfg.pretrain.budget;
  j["pretrain"]["eval_interval"] = cfg.pretrain.eval_interval;
  j["pretrain"]["early_stop_fraction"] = cfg.pretrain.early_stop_fraction;
  const auto transfer = [&j](const char* name, const TransferConfig& t) {
    j[name]["lr"] = t.lr;
    j[name]["budget"] = t.budget;
    j[name]["eval_interval"] = t.eval_interval;
  };
  transfer("step2", cfg.step2);
  transfer("finetune", cfg.finetune);
  transfer("scratch", cfg.scratch);
  j["imitation"]["sets"] = cfg.imitation.sets;
  j["imitation"]["pairs_per_set"] = cfg.imitation.pairs_per_set;
  j["imitation"]["epochs"] = cfg.imitation.epochs;
  j["imitation"]["lr"] = cfg.imitation.lr;
  j["imitation"]["batch"] = cfg.imitation.batch;
  j["imitation"]["holdout"] = cfg.imitation.holdout;
  j["imitation"]["target_accuracy"] = cfg.imitation.target_accuracy;
  j["imitation"]["prompt_init"] = cfg.imitation.prompt_init;
  j["eval"]["episodes"] = cfg.eval.episodes;
  j["eval"]["train_episodes"] = cfg.eval.train_episodes;
  j["eval"]["deterministic"] = cfg.eval.deterministic;
  j["expert"]["lookahead"] = cfg.expert.lookahead;
  j["expert"]["lat_accel_max"] = cfg.expert.lat_accel_max;
  j["expert"]["curv_window"] = cfg.expert.curv_window;
  j["expert"]["v_min"] = cfg.expert.v_min;
  j["expert"]["speed_kp"] = cfg.expert.speed_kp;
  j["strict_repro"] = cfg.strict_repro;
  return j.dump(2) + "\n";
}

void RunConfig::validate() const {
  compute_arch_shapes(arch);
  require(env.resolution == arch.resolution,
          "env.resolution must match arch.resolution (one observation pipeline)");
  require(env.dt > 0 && env.wheelbase > 0 && env.v_max > 0 && env.accel_gain > 0 && env.drag > 0,
          "env dynamics constants must be positive");
  require(env.steer_max > 0 && env.steer_rate > 0, "env steering limits must be positive");
  require(env.max_steps >= 1, "env.max_steps must be positive");
  require(env.offroad_factor > 1.0, "env.offroad_factor must exceed 1 (room beyond the edge)");
  require(env.view_extent > 0 && env.car_length > 0 && env.car_width > 0,
          "env rendering extents must be positive");
  require(track.control_points >= 4, "track.control_points must be at least 4");
  require(track.base_radius > 0 && track.half_width > 0, "track dimensions must be positive");
  require(track.radial_amplitude >= 0 && track.radial_amplitude < 0.5,
          "track.radial_amplitude must be in [0,0.5)");
  ppo.validate();
  require(pretrain.lr > 0 && step2.lr > 0 && finetune.lr > 0 && scratch.lr > 0,
          "stage learning rates must be positive");
  const int64_t batch = int64_t(ppo.n_steps) * ppo.n_envs;
  for (const auto& [name, budget] :
       {std::pair<const char*, int64_t>{"pretrain", pretrain.budget},
        {"step2", step2.budget},
        {"finetune", finetune.budget},
        {"scratch", scratch.budget}})
    require(budget >= batch, std::string(name) +
                                 ".budget must cover at least one PPO batch (" +
                                 std::to_string(batch) + " env steps)");
  require(pretrain.eval_interval >= 1 && step2.eval_interval >= 1 &&
              finetune.eval_interval >= 1 && scratch.eval_interval >= 1,
          "eval_interval must be positive");
  require(pretrain.early_stop_fraction >= 0 && pretrain.early_stop_fraction <= 1,
          "pretrain.early_stop_fraction must be in [0,1]");
  require(imitation.sets >= 1 && imitation.pairs_per_set >= 1,
          "imitation dataset sizes must be positive");
  require(imitation.epochs >= 1 && imitation.batch >= 1, "imitation epochs/batch must be positive");
  require(imitation.lr > 0, "imitation.lr must be positive");
  require(imitation.holdout >= 0 && imitation.holdout < 0.5,
          "imitation.holdout must be in [0,0.5)");
  require(imitation.target_accuracy >= 0 && imitation.target_accuracy <= 1,
          "imitation.target_accuracy must be in [0,1]");
  require(imitation.prompt_init == "copy" || imitation.prompt_init == "random",
          "imitation.prompt_init must be \"copy\" or \"random\"");
  require(eval.episodes >= 1 && eval.train_episodes >= 1, "eval episode counts must be positive");
  require(expert.lookahead > 0 && expert.lat_accel_max > 0 && expert.v_min > 0 &&
              expert.curv_window >= 1,
          "expert parameters must be positive");
}

PPOConfig ppo_with_lr(const RunConfig& cfg, double lr) {
  PPOConfig p = cfg.ppo;
  p.lr = lr;
  p.record_wall_time = !cfg.strict_repro;
  return p;
}

}  // namespace p3o
