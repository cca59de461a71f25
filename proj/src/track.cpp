#include "p3o/track.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "p3o/rng.hpp"
#include "p3o/tensor.hpp"  // require()

namespace p3o {

TrackSpec make_track_spec(uint64_t seed, const TrackGenConfig& cfg) {
  require(cfg.control_points >= 4, "track generator needs at least 4 control points");
  require(cfg.base_radius > 0 && cfg.half_width > 0, "track dimensions must be positive");
  require(cfg.radial_amplitude >= 0 && cfg.radial_amplitude < 0.5,
          "radial amplitude must be in [0, 0.5)");
  Rng rng(mix_seed(seed, 0x747261636b));
  TrackSpec spec;
  spec.seed = seed;
  spec.half_width = cfg.half_width;
  const int n = cfg.control_points;
  spec.control_points.reserve(size_t(n));
  for (int k = 0; k < n; ++k) {
    const double phi = 2.0 * M_PI * double(k) / double(n);
    const double r =
        cfg.base_radius * (1.0 + rng.uniform(-cfg.radial_amplitude, cfg.radial_amplitude));
    spec.control_points.push_back({r * std::cos(phi), r * std::sin(phi)});
  }
  return spec;
}

namespace {

double cross3(double ax, double ay, double bx, double by, double cx, double cy) {
  return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
}

// Proper (interior) crossing test; touching endpoints do not count.
bool segments_cross(const TrackPoint& a, const TrackPoint& b, const TrackPoint& c,
                    const TrackPoint& d) {
  const double d1 = cross3(c.x, c.y, d.x, d.y, a.x, a.y);
  const double d2 = cross3(c.x, c.y, d.x, d.y, b.x, b.y);
  const double d3 = cross3(a.x, a.y, b.x, b.y, c.x, c.y);
  const double d4 = cross3(a.x, a.y, b.x, b.y, d.x, d.y);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

double point_segment_dist2(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = ax + t * dx - px, qy = ay + t * dy - py;
  return qx * qx + qy * qy;
}

}  // namespace

Track Track::build(const TrackSpec& spec, int samples, double sdf_cell) {
  require(spec.control_points.size() >= 4, "track requires at least 4 control points");
  require(spec.half_width > 0, "track half-width must be positive");
  require(samples >= 16, "track requires at least 16 centerline samples");
  require(sdf_cell > 0, "distance grid cell must be positive");
  for (const auto& p : spec.control_points)
    require(std::isfinite(p[0]) && std::isfinite(p[1]), "track control points must be finite");

  // Dense uniform Catmull-Rom samples through the closed control loop.
  const int n = int(spec.control_points.size());
  const int per_seg = 128;
  std::vector<std::array<double, 2>> dense;
  dense.reserve(size_t(n) * per_seg);
  for (int k = 0; k < n; ++k) {
    const auto& p0 = spec.control_points[size_t((k - 1 + n) % n)];
    const auto& p1 = spec.control_points[size_t(k)];
    const auto& p2 = spec.control_points[size_t((k + 1) % n)];
    const auto& p3 = spec.control_points[size_t((k + 2) % n)];
    for (int j = 0; j < per_seg; ++j) {
      const double t = double(j) / per_seg;
      const double t2 = t * t, t3 = t2 * t;
      std::array<double, 2> q;
      for (int d = 0; d < 2; ++d) {
        q[size_t(d)] = 0.5 * (2.0 * p1[size_t(d)] + (-p0[size_t(d)] + p2[size_t(d)]) * t +
                              (2.0 * p0[size_t(d)] - 5.0 * p1[size_t(d)] + 4.0 * p2[size_t(d)] -
                               p3[size_t(d)]) *
                                  t2 +
                              (-p0[size_t(d)] + 3.0 * p1[size_t(d)] - 3.0 * p2[size_t(d)] +
                               p3[size_t(d)]) *
                                  t3);
      }
      dense.push_back(q);
    }
  }

  // Cumulative arc length over the dense closed polyline.
  const size_t m = dense.size();
  std::vector<double> cum(m + 1, 0.0);
  for (size_t i = 0; i < m; ++i) {
    const auto& a = dense[i];
    const auto& b = dense[(i + 1) % m];
    cum[i + 1] = cum[i] + std::hypot(b[0] - a[0], b[1] - a[1]);
  }
  const double dense_len = cum[m];
  require(dense_len > 0, "track arc length must be positive");

  // Resample to uniform arc spacing.
  Track track;
  track.spec_ = spec;
  track.points_.resize(size_t(samples));
  size_t seg = 0;
  for (int i = 0; i < samples; ++i) {
    const double target = dense_len * double(i) / double(samples);
    while (seg + 1 < m && cum[seg + 1] < target) ++seg;
    const double span = cum[seg + 1] - cum[seg];
    const double t = span > 0 ? (target - cum[seg]) / span : 0.0;
    const auto& a = dense[seg];
    const auto& b = dense[(seg + 1) % m];
    track.points_[size_t(i)].x = a[0] + t * (b[0] - a[0]);
    track.points_[size_t(i)].y = a[1] + t * (b[1] - a[1]);
  }

  // Arc positions from the final polygon chords (self-consistent geometry).
  double total = 0.0;
  for (int i = 0; i < samples; ++i) {
    track.points_[size_t(i)].s = total;
    const auto& a = track.points_[size_t(i)];
    const auto& b = track.points_[size_t((i + 1) % samples)];
    total += std::hypot(b.x - a.x, b.y - a.y);
  }
  track.length_ = total;
  track.seg_len_ = total / samples;
  require(track.length_ > 0, "track arc length must be positive");

  // Tangents and curvature from neighboring samples.
  for (int i = 0; i < samples; ++i) {
    const auto& prev = track.points_[size_t((i - 1 + samples) % samples)];
    const auto& next = track.points_[size_t((i + 1) % samples)];
    auto& p = track.points_[size_t(i)];
    const double tx = next.x - prev.x, ty = next.y - prev.y;
    const double tn = std::hypot(tx, ty);
    require(tn > 0, "degenerate centerline sample");
    p.tx = tx / tn;
    p.ty = ty / tn;
    const double ax = p.x - prev.x, ay = p.y - prev.y;
    const double bx = next.x - p.x, by = next.y - p.y;
    const double dtheta = std::atan2(ax * by - ay * bx, ax * bx + ay * by);
    p.curvature = std::fabs(dtheta) / track.seg_len_;
  }

  // Reject loops that self-intersect at the sampled resolution.
  for (int i = 0; i < samples; ++i) {
    for (int j = i + 2; j < samples; ++j) {
      if (i == 0 && j == samples - 1) continue;  // adjacent across the wrap
      if (segments_cross(track.points_[size_t(i)], track.points_[size_t((i + 1) % samples)],
                         track.points_[size_t(j)], track.points_[size_t((j + 1) % samples)]))
        require(false, "track centerline self-intersects at the sampled resolution");
    }
  }

  // Distance-to-centerline grid over the bounding box plus a margin wide
  // enough for road/edge queries anywhere near the drivable region.
  double minx = std::numeric_limits<double>::max(), maxx = -minx;
  double miny = minx, maxy = -minx;
  for (const auto& p : track.points_) {
    minx = std::min(minx, p.x);
    maxx = std::max(maxx, p.x);
    miny = std::min(miny, p.y);
    maxy = std::max(maxy, p.y);
  }
  const double margin = spec.half_width + 2.0;
  track.cell_ = sdf_cell;
  track.gx0_ = minx - margin;
  track.gy0_ = miny - margin;
  track.gnx_ = int(std::ceil((maxx - minx + 2 * margin) / sdf_cell)) + 1;
  track.gny_ = int(std::ceil((maxy - miny + 2 * margin) / sdf_cell)) + 1;
  track.grid_.assign(size_t(track.gnx_) * size_t(track.gny_), 0.0f);
  for (int iy = 0; iy < track.gny_; ++iy) {
    const double y = track.gy0_ + iy * sdf_cell;
    for (int ix = 0; ix < track.gnx_; ++ix) {
      const double x = track.gx0_ + ix * sdf_cell;
      double best = std::numeric_limits<double>::max();
      for (int i = 0; i < samples; ++i) {
        const auto& a = track.points_[size_t(i)];
        const auto& b = track.points_[size_t((i + 1) % samples)];
        best = std::min(best, point_segment_dist2(x, y, a.x, a.y, b.x, b.y));
      }
      track.grid_[size_t(iy) * size_t(track.gnx_) + size_t(ix)] = float(std::sqrt(best));
    }
  }
  return track;
}

Track::Projection Track::project(double x, double y) const {
  const int n = int(points_.size());
  int best_pt = 0;
  double best_d2 = std::numeric_limits<double>::max();
  for (int i = 0; i < n; ++i) {
    const double dx = points_[size_t(i)].x - x, dy = points_[size_t(i)].y - y;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_d2) {
      best_d2 = d2;
      best_pt = i;
    }
  }
  Projection out;
  double best_seg_d2 = std::numeric_limits<double>::max();
  for (int off = -2; off <= 1; ++off) {
    const int i = (best_pt + off + n) % n;
    const auto& a = points_[size_t(i)];
    const auto& b = points_[size_t((i + 1) % n)];
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((x - a.x) * dx + (y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double px = a.x + t * dx, py = a.y + t * dy;
    const double qx = x - px, qy = y - py;
    const double d2 = qx * qx + qy * qy;
    if (d2 < best_seg_d2) {
      best_seg_d2 = d2;
      const double len = std::sqrt(len2);
      out.segment = i;
      out.s = wrap_s(a.s + t * len, length_);
      // positive to the left of the travel direction
      out.lateral = len > 0 ? (dx * qy - dy * qx) / len : std::sqrt(d2);
    }
  }
  return out;
}

TrackPoint Track::sample(double s) const {
  const int n = int(points_.size());
  s = wrap_s(s, length_);
  // points_[i].s is increasing; find the segment containing s
  int lo = 0, hi = n;  // segment index in [0, n)
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (points_[size_t(mid)].s <= s)
      lo = mid;
    else
      hi = mid;
  }
  const auto& a = points_[size_t(lo)];
  const auto& b = points_[size_t((lo + 1) % n)];
  const double seg_end = lo + 1 < n ? b.s : length_;
  const double span = seg_end - a.s;
  const double t = span > 0 ? (s - a.s) / span : 0.0;
  TrackPoint p;
  p.s = s;
  p.x = a.x + t * (b.x - a.x);
  p.y = a.y + t * (b.y - a.y);
  double tx = a.tx + t * (b.tx - a.tx), ty = a.ty + t * (b.ty - a.ty);
  const double tn = std::hypot(tx, ty);
  if (tn > 0) {
    tx /= tn;
    ty /= tn;
  }
  p.tx = tx;
  p.ty = ty;
  p.curvature = a.curvature + t * (b.curvature - a.curvature);
  return p;
}

double Track::centerline_distance(double x, double y) const {
  const double fx = (x - gx0_) / cell_;
  const double fy = (y - gy0_) / cell_;
  if (fx < 0 || fy < 0 || fx >= gnx_ - 1 || fy >= gny_ - 1) return 1e9;
  const int ix = int(fx), iy = int(fy);
  const double ax = fx - ix, ay = fy - iy;
  const float* g = grid_.data();
  const size_t row = size_t(iy) * size_t(gnx_) + size_t(ix);
  const double d00 = g[row], d10 = g[row + 1];
  const double d01 = g[row + size_t(gnx_)], d11 = g[row + size_t(gnx_) + 1];
  return (1 - ay) * ((1 - ax) * d00 + ax * d10) + ay * ((1 - ax) * d01 + ax * d11);
}

double Track::max_curvature(double s0, double s1) const {
  require(s1 >= s0, "max_curvature window must have s1 >= s0");
  double out = 0.0;
  const int steps = std::max(1, int(std::ceil((s1 - s0) / seg_len_)));
  for (int k = 0; k <= steps; ++k) {
    const double s = s0 + (s1 - s0) * double(k) / double(steps);
    out = std::max(out, sample(s).curvature);
  }
  return out;
}

double Track::wrap_s(double s, double length) {
  s = std::fmod(s, length);
  if (s < 0) s += length;
  return s;
}

double Track::wrap_delta(double s_new, double s_old, double length) {
  double d = s_new - s_old;
  while (d > 0.5 * length) d -= length;
  while (d < -0.5 * length) d += length;
  return d;
}

}  // namespace p3o
