#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace p3o {

// Closed centerline loop given as control points (meters). A Catmull-Rom
// spline through the control points is resampled to uniform arc length.
struct TrackSpec {
  std::vector<std::array<double, 2>> control_points;
  double half_width = 4.0;
  uint64_t seed = 0;  // generator provenance only
};

struct TrackGenConfig {
  double base_radius = 30.0;
  double radial_amplitude = 0.12;  // relative radius perturbation
  int control_points = 12;
  double half_width = 4.0;
};

// Perturbed ring: control points on a circle with seeded radial jitter.
TrackSpec make_track_spec(uint64_t seed, const TrackGenConfig& cfg = {});

struct TrackPoint {
  double x = 0, y = 0;    // position
  double tx = 0, ty = 0;  // unit tangent
  double s = 0;           // arc length from start
  double curvature = 0;   // unsigned
};

// Sampled centerline with a coarse distance grid for rendering queries.
class Track {
 public:
  static Track build(const TrackSpec& spec, int samples = 512, double sdf_cell = 0.5);

  const TrackSpec& spec() const { return spec_; }
  double length() const { return length_; }
  double half_width() const { return spec_.half_width; }
  const std::vector<TrackPoint>& points() const { return points_; }

  struct Projection {
    double s = 0;        // arc position of the closest centerline point
    double lateral = 0;  // signed offset, positive to the left of the tangent
    int segment = 0;
  };
  // Closest-point projection onto the sampled centerline (exact per segment).
  Projection project(double x, double y) const;

  // Interpolated centerline point at arc length s (wraps around the loop).
  TrackPoint sample(double s) const;

  // Distance to the centerline via bilinear interpolation of the precomputed
  // grid; far outside the grid returns a large value.
  double centerline_distance(double x, double y) const;
  // Signed distance to the road edge: negative on the road surface.
  double road_sdf(double x, double y) const { return centerline_distance(x, y) - half_width(); }

  // Largest |curvature| over the arc window [s0, s1] (wraps).
  double max_curvature(double s0, double s1) const;

  static double wrap_s(double s, double length);
  // Smallest signed arc difference s_new - s_old on the loop.
  static double wrap_delta(double s_new, double s_old, double length);

 private:
  TrackSpec spec_;
  std::vector<TrackPoint> points_;
  double length_ = 0;
  double seg_len_ = 0;
  // distance grid
  double gx0_ = 0, gy0_ = 0;
  double cell_ = 0.5;
  int gnx_ = 0, gny_ = 0;
  std::vector<float> grid_;
};

}  // namespace p3o
