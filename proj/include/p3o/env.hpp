#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "p3o/rng.hpp"
#include "p3o/tensor.hpp"
#include "p3o/track.hpp"

namespace p3o {

struct Color {
  float r = 0, g = 0, b = 0;
};

// Render-only visual configuration. Never touches dynamics or rewards.
struct VariantSpec {
  std::string name = "env0";
  Color background{0.16f, 0.55f, 0.22f};
  Color road{0.45f, 0.45f, 0.45f};
  Color road_edge{0.95f, 0.95f, 0.95f};
  Color car{0.88f, 0.12f, 0.10f};
  int distractor_count = 0;
  float distractor_radius = 1.8f;  // meters
  uint64_t distractor_seed = 0;    // placement + size + color choice
  // 0: palette-colored blobs; 1: road mimics (road-colored core ringed by the
  // edge color, so the clutter shares the lane's own signature)
  int distractor_style = 0;
  std::array<int, 3> channel_map{0, 1, 2};  // output channel k reads source channel_map[k]
  bool invert = false;
  float noise_amplitude = 0.0f;
  uint64_t noise_seed = 0;
};

// Presets env0..env6: env0 canonical; env1 road recolor; env2 background
// recolor; env3 distractor shapes; env4 car recolor; env5 channel
// permutation; env6 inversion + distractors (hardest).
VariantSpec variant_preset(const std::string& id);
const std::vector<std::string>& variant_preset_ids();

struct CarState {
  double x = 0, y = 0;    // position (m)
  double heading = 0;     // rad
  double speed = 0;       // m/s, in [0, v_max]
  double steer = 0;       // current steering angle (rad); the slew-rate state
  double progress = 0;    // cumulative arc advance since reset, in [0, L]
  int step = 0;
};

struct EnvConfig {
  double dt = 0.1;
  double wheelbase = 2.0;
  double v_max = 8.0;
  double accel_gain = 4.0;  // m/s^2 at full throttle (terminal speed = gain/drag)
  double drag = 0.5;        // 1/s
  double steer_max = 0.6;   // rad
  double steer_rate = 4.0;  // rad/s slew limit
  double offroad_factor = 2.0;    // terminate when |lateral| > factor * half_width
  double offroad_penalty = 50.0;
  double step_cost = 0.1;
  double progress_scale = 1000.0;
  int max_steps = 1000;
  // rendering
  int resolution = 48;
  double view_extent = 12.0;  // meters from car to each view edge
  double car_length = 3.0, car_width = 1.5;
};

struct Observation {
  int resolution = 0;
  std::vector<uint8_t> u8;  // [3, R, R] channel-major

  // Values k/255 in [0,1]; shape [3,R,R].
  TensorF to_float() const;
  // Append as [C,R,R] floats into a preallocated buffer.
  void write_float(float* dst) const;
};

// Pure function of (state, track, variant, cfg): background, road band with
// edge lines, distractors, car sprite and speed strip, then channel
// permutation, inversion, per-pixel noise, quantized to 8 bits.
Observation render_observation(const CarState& state, const Track& track,
                               const VariantSpec& variant, const EnvConfig& cfg);

struct StepOut {
  float reward = 0;
  bool done = false;
  // info
  double progress_delta = 0;
  bool lap_complete = false;
  bool offroad = false;
  bool timeout = false;
};

// Deterministic single-car episode on a fixed track. reset() starts from the
// canonical pose (track start, speed 0); reset_random() draws a perturbed
// start pose from the env seed for trajectory diversity.
class Env {
 public:
  Env(std::shared_ptr<const Track> track, VariantSpec variant, uint64_t seed, EnvConfig cfg = {});

  const Observation& reset();
  const Observation& reset_random();
  StepOut step(float steer_cmd, float throttle_cmd);

  const Observation& observation() const { return obs_; }
  const CarState& car() const { return state_; }
  const Track& track() const { return *track_; }
  const VariantSpec& variant() const { return variant_; }
  const EnvConfig& config() const { return cfg_; }
  bool done() const { return done_; }
  bool lap_complete() const { return lap_complete_; }
  double progress() const { return state_.progress; }
  double episode_return() const { return episode_return_; }

 private:
  void render();
  void begin_episode(const CarState& s);

  std::shared_ptr<const Track> track_;
  VariantSpec variant_;
  EnvConfig cfg_;
  Rng rng_;
  CarState state_;
  Observation obs_;
  double last_s_ = 0;  // arc position of the previous step's projection
  double episode_return_ = 0;
  bool done_ = true;
  bool lap_complete_ = false;
};

}  // namespace p3o
