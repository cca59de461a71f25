#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "p3o/env.hpp"
#include "p3o/expert.hpp"
#include "p3o/param_store.hpp"

namespace p3o {

// Fixed 5x3 action grid: steer {-1,-0.5,0,0.5,1} x throttle {0,0.5,1}.
// class = steer_index * 3 + throttle_index.
struct ActionGrid {
  static constexpr int kSteerLevels = 5;
  static constexpr int kThrottleLevels = 3;
  static constexpr int kClasses = kSteerLevels * kThrottleLevels;  // 15
  static const std::array<float, kSteerLevels> steer_levels;
  static const std::array<float, kThrottleLevels> throttle_levels;
};

// Nearest grid point with each axis normalized to [0,1] (steer mapped by
// (s+1)/2); out-of-range inputs are clamped; ties go to the lower index.
int discretize_action(float steer, float throttle);
std::array<float, 2> undiscretize_action(int cls);

// (observation, expert action, discretized class) triples, all rendered under
// one preset.
struct ExpertDataset {
  std::string preset;
  uint64_t seed = 0;
  int resolution = 0;
  std::vector<uint8_t> obs;      // [n, 3, R, R]
  std::vector<float> actions;    // [n, 2]
  std::vector<int32_t> classes;  // [n]

  int size() const { return int(classes.size()); }
  void write_obs_float(int index, float* dst) const;
};

// Runs the scripted expert for `sets` groups of pairs_per_set consecutive
// steps. Each contributing episode must complete a full lap.
ExpertDataset collect_expert_dataset(std::shared_ptr<const Track> track, const std::string& preset,
                                     int sets, int pairs_per_set, uint64_t seed,
                                     const EnvConfig& env_cfg = {},
                                     const ExpertConfig& expert_cfg = {});

// Header JSON + little-endian raw arrays (u8 images, f32 actions, i32 classes).
void save_dataset(const ExpertDataset& data, const std::string& path);
ExpertDataset load_dataset(const std::string& path);

struct Step1Config {
  int epochs = 40;  // upper bound; stops early once target_accuracy is hit
  double lr = 1e-3;
  int batch = 128;
  double holdout = 0.1;
  double target_accuracy = 0.99;  // train accuracy early-stop (0 disables)
};

// Sets the classifier to the action-grid prototype geometry: logits equal to
// -||mean - grid_cell||^2 / tau up to a class-independent term. Cross-entropy
// through this layer pulls the frozen head's action mean into the correct
// grid cell, so the cloned policy drives with the mean directly.
void init_classifier_prototype(ParamStore& params);

struct Step1Stats {
  std::vector<double> epoch_loss;  // mean train CE per epoch
  std::vector<double> epoch_accuracy;
  double holdout_ce = 0;
  double holdout_accuracy = 0;
};

// Behavior cloning of the classifier tower: minimizes one-hot cross-entropy
// of classifier_forward against dataset classes. Only prompt/classifier
// entries may move (stage-1 freeze mask).
Step1Stats train_step1(const ExpertDataset& data, ParamStore& params, const Step1Config& cfg,
                       uint64_t seed);

// Deterministic (cross_entropy, accuracy) over the given sample indices.
std::pair<double, double> bc_eval(const ExpertDataset& data, const std::vector<int>& indices,
                                  const ParamStore& params);

}  // namespace p3o
