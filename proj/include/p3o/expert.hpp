#pragma once

#include <array>

#include "p3o/env.hpp"
#include "p3o/track.hpp"

namespace p3o {

// Pure-pursuit lateral control plus curvature-scheduled speed. A pure
// function of the ground-truth car state, so it behaves identically under
// every render variant.
struct ExpertConfig {
  double lookahead = 4.0;       // meters along the centerline
  double lat_accel_max = 2.5;   // m/s^2 comfort bound for corner speed
  double curv_window = 10.0;    // meters of track scanned ahead for curvature
  double v_min = 2.0;           // corner speed floor
  double speed_kp = 1.2;        // throttle P gain on the speed error
};

// Returns (steer in [-1,1], throttle in [0,1]).
std::array<float, 2> expert_action(const CarState& state, const Track& track,
                                   const EnvConfig& env_cfg = {},
                                   const ExpertConfig& cfg = {});

}  // namespace p3o
