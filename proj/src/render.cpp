#include <cmath>

#include "p3o/env.hpp"

namespace p3o {

TensorF Observation::to_float() const {
  TensorF out({3, resolution, resolution});
  write_float(out.data.data());
  return out;
}

void Observation::write_float(float* dst) const {
  for (size_t i = 0; i < u8.size(); ++i) dst[i] = float(u8[i]) * (1.0f / 255.0f);
}

namespace {

struct Distractor {
  double x = 0, y = 0;
  double radius = 0;
  int shape = 0;  // 0 disc, 1 square
  Color color;
};

const Color kDistractorPalette[4] = {
    {0.95f, 0.85f, 0.10f},  // yellow
    {0.10f, 0.80f, 0.85f},  // cyan
    {0.90f, 0.15f, 0.80f},  // magenta
    {0.25f, 0.35f, 0.95f},  // blue
};

// World-space clutter scattered in an annulus around the loop; pure function
// of the variant.
std::vector<Distractor> place_distractors(const VariantSpec& variant, const Track& track) {
  std::vector<Distractor> out;
  if (variant.distractor_count <= 0) return out;
  Rng rng(mix_seed(variant.distractor_seed, 0xd157));
  const double ring = track.length() / (2.0 * M_PI);
  out.reserve(size_t(variant.distractor_count));
  for (int i = 0; i < variant.distractor_count; ++i) {
    Distractor d;
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    const double rad = ring * rng.uniform(0.35, 1.55);
    d.x = rad * std::cos(phi);
    d.y = rad * std::sin(phi);
    d.radius = double(variant.distractor_radius) * rng.uniform(0.7, 1.3);
    d.shape = i % 2;
    d.color = kDistractorPalette[i % 4];
    out.push_back(d);
  }
  return out;
}

inline uint8_t quantize(float c) {
  if (c <= 0.0f) return 0;
  if (c >= 1.0f) return 255;
  return uint8_t(std::lround(c * 255.0f));
}

}  // namespace

Observation render_observation(const CarState& state, const Track& track,
                               const VariantSpec& variant, const EnvConfig& cfg) {
  require(std::isfinite(state.x) && std::isfinite(state.y) && std::isfinite(state.heading),
          "render_observation: car state must be finite");
  const int R = cfg.resolution;
  require(R > 0, "render resolution must be positive");
  Observation obs;
  obs.resolution = R;
  obs.u8.assign(size_t(3) * R * R, 0);

  const std::vector<Distractor> distractors = place_distractors(variant, track);
  const double ext = cfg.view_extent;
  const double scale = 2.0 * ext / R;
  const double ch = std::cos(state.heading), sh = std::sin(state.heading);
  const double half = track.half_width();
  const double strip_w = 1.5;  // meters of view devoted to the speed strip
  const double speed_frac = std::clamp(state.speed / cfg.v_max, 0.0, 1.0);
  const Color strip_bg{0.08f, 0.08f, 0.08f};

  const size_t plane = size_t(R) * R;
  for (int i = 0; i < R; ++i) {
    const double v = ext - (double(i) + 0.5) * scale;  // forward (up in the image)
    for (int j = 0; j < R; ++j) {
      const double u = (double(j) + 0.5) * scale - ext;  // right of the car
      // view -> world: forward = (ch, sh), right = (sh, -ch)
      const double wx = state.x + v * ch + u * sh;
      const double wy = state.y + v * sh - u * ch;

      Color c;
      const double d = track.centerline_distance(wx, wy) - half;
      if (d <= -0.5) {
        c = variant.road;
      } else if (d <= 0.0) {
        c = variant.road_edge;
      } else {
        c = variant.background;
        for (const auto& ds : distractors) {
          const double dx = wx - ds.x, dy = wy - ds.y;
          bool inside, core;
          if (ds.shape == 0) {
            const double q = dx * dx + dy * dy;
            inside = q <= ds.radius * ds.radius;
            core = q <= 0.4624 * ds.radius * ds.radius;  // (0.68 r)^2
          } else {
            const double m = std::max(std::fabs(dx), std::fabs(dy));
            inside = m <= ds.radius;
            core = m <= 0.68 * ds.radius;
          }
          if (inside) {
            // style 1 disguises the blob as a road fragment: lane-colored
            // core with an edge-colored rim of roughly the edge-band width
            c = variant.distractor_style == 1 ? (core ? variant.road : variant.road_edge)
                                              : ds.color;
            break;
          }
        }
      }
      // forward view is seen through the vehicle's tinted canopy: an even
      // car-colored wash, so the car's color is part of the lookahead percept
      // (contrast is preserved, the color balance shifts with the car)
      if (v > 0.5 * cfg.car_length) {
        const float a = 0.40f;
        c = Color{(1 - a) * c.r + a * variant.car.r, (1 - a) * c.g + a * variant.car.g,
                  (1 - a) * c.b + a * variant.car.b};
      }
      // car sprite, centered, axis-aligned in the heading-up view
      if (std::fabs(u) <= 0.5 * cfg.car_width && std::fabs(v) <= 0.5 * cfg.car_length)
        c = variant.car;
      // speed strip along the right edge, filled bottom-up and drawn in the
      // car color so speed stays observable from a single frame
      if (u > ext - strip_w) {
        const double fill = (v + ext) / (2.0 * ext);
        c = fill <= speed_frac ? variant.car : strip_bg;
      }

      const float src[3] = {c.r, c.g, c.b};
      const size_t pix = size_t(i) * R + j;
      for (int k = 0; k < 3; ++k) {
        uint8_t q = quantize(src[variant.channel_map[size_t(k)]]);
        if (variant.invert) q = uint8_t(255 - q);
        if (variant.noise_amplitude > 0.0f) {
          const size_t idx = size_t(k) * plane + pix;
          const double n = 2.0 * noise_value(variant.noise_seed, uint64_t(state.step),
                                             uint64_t(idx)) -
                           1.0;
          q = quantize(float(q) * (1.0f / 255.0f) + float(n) * variant.noise_amplitude);
        }
        obs.u8[size_t(k) * plane + pix] = q;
      }
    }
  }
  return obs;
}

VariantSpec variant_preset(const std::string& id) {
  VariantSpec v;
  v.name = id;
  if (id == "env0") {
    return v;
  } else if (id == "env1") {
    // Road repainted to the terrain color; the lane stays marked by its edges.
    v.road = Color{0.16f, 0.55f, 0.22f};
    return v;
  } else if (id == "env2") {
    // Terrain paved over in the road color; only the edge lines separate them.
    v.background = Color{0.45f, 0.45f, 0.45f};
    return v;
  } else if (id == "env3") {
    // Road-mimicking clutter: fake lane fragments scattered over the terrain.
    v.distractor_count = 60;
    v.distractor_radius = 4.0f;
    v.distractor_seed = 3;
    v.distractor_style = 1;
    return v;
  } else if (id == "env4") {
    // Camouflage: car sprite and speed strip repainted to the terrain color.
    v.car = Color{0.16f, 0.55f, 0.22f};
    return v;
  } else if (id == "env5") {
    v.channel_map = {1, 2, 0};
    return v;
  } else if (id == "env6") {
    v.invert = true;
    v.distractor_count = 14;
    v.distractor_seed = 6;
    return v;
  }
  require(false, "unknown variant preset: " + id + " (expected env0..env6)");
  return v;
}

const std::vector<std::string>& variant_preset_ids() {
  static const std::vector<std::string> ids = {"env0", "env1", "env2", "env3",
                                               "env4", "env5", "env6"};
  return ids;
}

}  // namespace p3o
