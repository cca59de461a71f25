#include "p3o/env.hpp"

#include <algorithm>
#include <cmath>

namespace p3o {

Env::Env(std::shared_ptr<const Track> track, VariantSpec variant, uint64_t seed, EnvConfig cfg)
    : track_(std::move(track)), variant_(std::move(variant)), cfg_(cfg),
      rng_(mix_seed(seed, 0x656e76)) {
  require(track_ != nullptr, "env requires a track");
  require(cfg_.dt > 0 && cfg_.wheelbase > 0 && cfg_.v_max > 0, "env dynamics must be positive");
  require(cfg_.max_steps > 0, "env max_steps must be positive");
  require(cfg_.offroad_factor >= 1.0, "off-road tolerance must be at least the road width");
}

void Env::begin_episode(const CarState& s) {
  state_ = s;
  state_.progress = 0;
  state_.step = 0;
  last_s_ = track_->project(state_.x, state_.y).s;
  episode_return_ = 0;
  done_ = false;
  lap_complete_ = false;
  render();
}

const Observation& Env::reset() {
  const TrackPoint& p0 = track_->points().front();
  CarState s;
  s.x = p0.x;
  s.y = p0.y;
  s.heading = std::atan2(p0.ty, p0.tx);
  begin_episode(s);
  return obs_;
}

const Observation& Env::reset_random() {
  const TrackPoint p = track_->sample(rng_.uniform(0.0, track_->length()));
  const double lat = rng_.uniform(-0.5, 0.5) * track_->half_width();
  CarState s;
  s.x = p.x - p.ty * lat;  // left normal is (-ty, tx)
  s.y = p.y + p.tx * lat;
  s.heading = std::atan2(p.ty, p.tx) + rng_.uniform(-0.2, 0.2);
  s.speed = rng_.uniform(0.0, 0.6 * cfg_.v_max);
  begin_episode(s);
  return obs_;
}

StepOut Env::step(float steer_cmd, float throttle_cmd) {
  require(!done_, "step called on a finished episode (reset first)");
  require(std::isfinite(steer_cmd) && std::isfinite(throttle_cmd),
          "action components must be finite");
  const double steer_in = std::clamp(double(steer_cmd), -1.0, 1.0);
  const double thr = std::clamp(double(throttle_cmd), 0.0, 1.0);

  // steering slew toward the commanded angle
  const double target = steer_in * cfg_.steer_max;
  const double max_d = cfg_.steer_rate * cfg_.dt;
  state_.steer += std::clamp(target - state_.steer, -max_d, max_d);

  // throttle with linear drag; terminal speed at full throttle is gain/drag
  state_.speed += (cfg_.accel_gain * thr - cfg_.drag * state_.speed) * cfg_.dt;
  state_.speed = std::clamp(state_.speed, 0.0, cfg_.v_max);

  // kinematic bicycle
  state_.heading += state_.speed / cfg_.wheelbase * std::tan(state_.steer) * cfg_.dt;
  if (state_.heading > M_PI) state_.heading -= 2.0 * M_PI;
  if (state_.heading < -M_PI) state_.heading += 2.0 * M_PI;
  state_.x += state_.speed * std::cos(state_.heading) * cfg_.dt;
  state_.y += state_.speed * std::sin(state_.heading) * cfg_.dt;
  state_.step += 1;

  const Track::Projection proj = track_->project(state_.x, state_.y);
  const double delta = Track::wrap_delta(proj.s, last_s_, track_->length());
  last_s_ = proj.s;
  const double before = state_.progress;
  state_.progress = std::clamp(state_.progress + delta, 0.0, track_->length());

  StepOut out;
  out.progress_delta = state_.progress - before;
  double reward =
      cfg_.progress_scale * out.progress_delta / track_->length() - cfg_.step_cost;

  if (std::fabs(proj.lateral) > cfg_.offroad_factor * track_->half_width()) {
    out.offroad = true;
    reward -= cfg_.offroad_penalty;
    done_ = true;
  } else if (state_.progress >= track_->length()) {
    out.lap_complete = true;
    lap_complete_ = true;
    done_ = true;
  } else if (state_.step >= cfg_.max_steps) {
    out.timeout = true;
    done_ = true;
  }
  out.reward = float(reward);
  out.done = done_;
  episode_return_ += reward;
  render();
  return out;
}

void Env::render() { obs_ = render_observation(state_, *track_, variant_, cfg_); }

}  // namespace p3o
