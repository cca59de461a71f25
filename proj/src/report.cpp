#include "p3o/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "p3o/config.hpp"
#include "p3o/metrics.hpp"
#include "p3o/tensor.hpp"

namespace p3o {

int64_t convergence_step(const std::vector<std::pair<int64_t, double>>& series, int window) {
  require(!series.empty(), "convergence_step: empty eval series");
  require(window >= 1, "convergence_step: window must be positive");
  const int n = int(series.size());
  const int w = std::min(window, n);
  std::vector<double> ma;
  for (int i = w - 1; i < n; ++i) {
    double s = 0;
    for (int k = i - w + 1; k <= i; ++k) s += series[size_t(k)].second;
    ma.push_back(s / w);
  }
  const double threshold = 0.9 * ma.back();
  for (size_t m = 0; m < ma.size(); ++m)
    if (ma[m] >= threshold) return series[size_t(w - 1) + m].first;
  return -1;
}

namespace {

const std::vector<std::string>& presets16() {
  static const std::vector<std::string> p = {"env1", "env2", "env3", "env4", "env5", "env6"};
  return p;
}

struct SeedDir {
  std::string dir;
  RunConfig cfg;
  std::map<std::string, double> eval_mean;  // eval json tag -> mean_return
  std::map<std::string, std::vector<std::pair<int64_t, double>>> series;  // evals.csv label
};

SeedDir load_seed_dir(const std::string& dir) {
  SeedDir d;
  d.dir = dir;
  d.cfg = load_run_config((std::filesystem::path(dir) / "config.json").string());

  std::vector<std::string> eval_files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("eval_", 0) == 0 && name.size() > 10 &&
        name.substr(name.size() - 5) == ".json")
      eval_files.push_back(entry.path().string());
  }
  std::sort(eval_files.begin(), eval_files.end());
  for (const auto& file : eval_files) {
    std::ifstream f(file);
    require(f.good(), "cannot open " + file);
    const nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    require(!j.is_discarded(), file + " is not valid JSON");
    d.eval_mean[j.at("tag").get<std::string>()] = j.at("mean_return").get<double>();
  }

  const std::string evals = (std::filesystem::path(dir) / "evals.csv").string();
  if (std::filesystem::exists(evals)) {
    std::ifstream f(evals);
    require(f.good(), "cannot open " + evals);
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string label, seed, steps, ret;
      std::getline(ss, label, ',');
      std::getline(ss, seed, ',');
      std::getline(ss, steps, ',');
      std::getline(ss, ret, ',');
      d.series[label].emplace_back(std::stoll(steps), std::stod(ret));
    }
  }
  return d;
}

std::optional<double> tag_mean(const SeedDir& d, const std::string& tag) {
  auto it = d.eval_mean.find(tag);
  if (it == d.eval_mean.end()) return std::nullopt;
  return it->second;
}

std::optional<double> avg(const std::vector<std::optional<double>>& vals) {
  double sum = 0;
  int n = 0;
  for (const auto& v : vals)
    if (v) {
      sum += *v;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::string fmt(double v, const char* spec) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string pad(std::string s, size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

std::string cell(const std::optional<double>& v, const char* spec) {
  return v ? fmt(*v, spec) : std::string("n/a");
}

// Per-mode training budget (for averaging in F cases) and evals.csv label.
int64_t mode_budget(const RunConfig& cfg, const std::string& mode) {
  if (mode == "p3o" || mode == "step2_only") return cfg.step2.budget;
  if (mode == "ppo_finetune") return cfg.finetune.budget;
  if (mode == "ppo_scratch") return cfg.scratch.budget;
  require(false, "no training budget for mode " + mode);
  return 0;
}

std::string mode_label(const std::string& mode, const std::string& preset) {
  return (mode == "p3o" ? "step2" : mode) + "_" + preset;
}

}  // namespace

Report build_report(const std::vector<std::string>& run_dirs) {
  require(!run_dirs.empty(), "report needs at least one run directory");
  std::vector<SeedDir> seeds;
  for (const auto& dir : run_dirs) seeds.push_back(load_seed_dir(dir));

  std::ostringstream t1, t2, t3, csv;
  csv << "section,preset,column,value\n";
  const auto csv_row = [&csv](const char* section, const std::string& preset,
                              const std::string& column, const std::string& value) {
    csv << section << ',' << preset << ',' << column << ',' << value << '\n';
  };

  // --- transfer ratios ------------------------------------------------------
  t1 << "Transfer scores and ratios (deterministic mean return; ratio = target/source;\n"
     << "seed-averaged over " << seeds.size() << " run dirs)\n";
  t1 << pad("preset", 8) << pad("source", 12) << pad("pretrain", 12) << pad("ratio", 10)
     << pad("p3o", 12) << pad("ratio", 10) << "\n";
  {
    std::vector<std::optional<double>> src;
    for (const auto& d : seeds) src.push_back(tag_mean(d, "pretrain_env0"));
    csv_row("transfer", "env0", "source", cell(avg(src), "%.6g"));
    for (const auto& preset : presets16()) {
      std::vector<std::optional<double>> pre, p3o, pre_ratio, p3o_ratio;
      for (const auto& d : seeds) {
        const auto s = tag_mean(d, "pretrain_env0");
        const auto p = tag_mean(d, "pretrain_" + preset);
        const auto q = tag_mean(d, "step2_" + preset);
        pre.push_back(p);
        p3o.push_back(q);
        pre_ratio.push_back(s && p && *s > 0 ? std::optional<double>(*p / *s) : std::nullopt);
        p3o_ratio.push_back(s && q && *s > 0 ? std::optional<double>(*q / *s) : std::nullopt);
      }
      t1 << pad(preset, 8) << pad(cell(avg(src), "%.1f"), 12) << pad(cell(avg(pre), "%.1f"), 12)
         << pad(cell(avg(pre_ratio), "%.3f"), 10) << pad(cell(avg(p3o), "%.1f"), 12)
         << pad(cell(avg(p3o_ratio), "%.3f"), 10) << "\n";
      csv_row("transfer", preset, "pretrain", cell(avg(pre), "%.6g"));
      csv_row("transfer", preset, "pretrain_ratio", cell(avg(pre_ratio), "%.6g"));
      csv_row("transfer", preset, "p3o", cell(avg(p3o), "%.6g"));
      csv_row("transfer", preset, "p3o_ratio", cell(avg(p3o_ratio), "%.6g"));
    }
  }

  // --- efficiency -----------------------------------------------------------
  const std::vector<std::string> trained = {"p3o", "ppo_finetune", "ppo_scratch", "step2_only"};
  t2 << "\nTraining efficiency (convergence step in env steps: first point where the\n"
     << "5-eval moving average reaches 90% of its final value; F = never reached,\n"
     << "- = no training phase; F counts as the full budget in seed averages)\n";
  t2 << pad("preset", 8);
  for (const auto& m : trained) t2 << pad(m, 14);
  t2 << pad("step1_only", 12) << pad("random", 8) << "\n";
  for (const auto& preset : presets16()) {
    t2 << pad(preset, 8);
    for (const auto& mode : trained) {
      const std::string label = mode_label(mode, preset);
      double sum = 0;
      int n = 0, fails = 0;
      for (const auto& d : seeds) {
        auto it = d.series.find(label);
        if (it == d.series.end() || it->second.empty()) continue;
        const int64_t step = convergence_step(it->second);
        ++n;
        if (step < 0) {
          ++fails;
          sum += double(mode_budget(d.cfg, mode));
        } else {
          sum += double(step);
        }
      }
      std::string text;
      if (n == 0)
        text = "n/a";
      else if (fails == n)
        text = "F";
      else
        text = fmt(sum / n, "%.0f");
      t2 << pad(text, 14);
      csv_row("efficiency", preset, mode, text);
    }
    t2 << pad("-", 12) << pad("-", 8) << "\n";
    csv_row("efficiency", preset, "step1_only", "-");
    csv_row("efficiency", preset, "random", "-");
  }

  // --- ablation -------------------------------------------------------------
  const std::vector<std::pair<std::string, std::string>> ablation_cols = {
      {"p3o", "step2_"},           {"step1_only", "step1_only_"},
      {"step2_only", "step2_only_"}, {"ppo_scratch", "ppo_scratch_"},
      {"ppo_finetune", "ppo_finetune_"}, {"pretrain", "pretrain_"},
      {"random", "random_"}};
  t3 << "\nAblation (deterministic mean return, seed-averaged; pretrain = source policy\n"
     << "without adaptation, random = untrained network)\n";
  t3 << pad("preset", 8);
  for (const auto& [name, prefix] : ablation_cols) t3 << pad(name, 14);
  t3 << "\n";
  for (const auto& preset : presets16()) {
    t3 << pad(preset, 8);
    for (const auto& [name, prefix] : ablation_cols) {
      std::vector<std::optional<double>> vals;
      for (const auto& d : seeds) vals.push_back(tag_mean(d, prefix + preset));
      t3 << pad(cell(avg(vals), "%.1f"), 14);
      csv_row("ablation", preset, name, cell(avg(vals), "%.6g"));
    }
    t3 << "\n";
  }

  Report r;
  r.transfer_table = t1.str();
  r.efficiency_table = t2.str();
  r.ablation_table = t3.str();
  r.csv = csv.str();
  return r;
}

void write_report(const Report& report, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream f((std::filesystem::path(out_dir) / "report.txt").string(), std::ios::trunc);
    require(f.good(), "cannot write report.txt");
    f << report.transfer_table << report.efficiency_table << report.ablation_table;
  }
  {
    std::ofstream f((std::filesystem::path(out_dir) / "report.csv").string(), std::ios::trunc);
    require(f.good(), "cannot write report.csv");
    f << report.csv;
  }
}

}  // namespace p3o
