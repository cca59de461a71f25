#include "p3o/expert.hpp"

#include <algorithm>
#include <cmath>

namespace p3o {

std::array<float, 2> expert_action(const CarState& state, const Track& track,
                                   const EnvConfig& env_cfg, const ExpertConfig& cfg) {
  const Track::Projection proj = track.project(state.x, state.y);

  // Pure pursuit: steer toward the centerline point `lookahead` meters ahead.
  const TrackPoint target = track.sample(proj.s + cfg.lookahead);
  const double chh = std::cos(state.heading), shh = std::sin(state.heading);
  const double rx = target.x - state.x, ry = target.y - state.y;
  const double lx = chh * rx + shh * ry;   // forward
  const double ly = -shh * rx + chh * ry;  // left
  const double d2 = std::max(lx * lx + ly * ly, 1e-6);
  const double kappa = 2.0 * ly / d2;
  const double steer_angle = std::atan(kappa * env_cfg.wheelbase);
  const double steer = std::clamp(steer_angle / env_cfg.steer_max, -1.0, 1.0);

  // Corner speed from the sharpest curvature in the window ahead.
  const double k_max = std::max(track.max_curvature(proj.s + 1.0, proj.s + cfg.curv_window), 1e-6);
  double v_target = std::sqrt(cfg.lat_accel_max / k_max);
  v_target = std::clamp(v_target, cfg.v_min, env_cfg.v_max);

  // Feedforward holds v_target against drag; P term closes the error.
  const double ff = env_cfg.drag * v_target / env_cfg.accel_gain;
  const double throttle =
      std::clamp(ff + cfg.speed_kp * (v_target - state.speed) / env_cfg.v_max, 0.0, 1.0);
  return {float(steer), float(throttle)};
}

}  // namespace p3o
