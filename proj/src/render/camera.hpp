#pragma once

#include <cmath>

#include "core/common.hpp"
#include "core/geometry.hpp"

namespace naf {

// Pinhole camera, OpenCV convention (x right, y down, z forward), pose maps
// camera coordinates to world.
struct Camera {
  int W = 64, H = 64;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Posed pose;

  int pixels() const { return W * H; }

  // px, py integer pixel coordinates; rays go through pixel centers.
  void ray(int px, int py, Vec3<double>& origin, Vec3<double>& dir) const {
    Vec3<double> d((px + 0.5 - cx) / fx, (py + 0.5 - cy) / fy, 1.0);
    d.normalize();
    origin = pose.t;
    dir = pose.R * d;
  }

  Vec3<double> backproject(int px, int py, double depth) const {
    Vec3<double> o, d;
    ray(px, py, o, d);
    return o + depth * d;
  }
};

inline Camera make_camera(int W, int H, double fov_deg, const Posed& pose) {
  require(W > 0 && H > 0, Errc::invalid_argument, "camera resolution must be positive");
  require(fov_deg > 1 && fov_deg < 179, Errc::invalid_argument,
          "field of view out of range");
  Camera c;
  c.W = W;
  c.H = H;
  double f = 0.5 * W / std::tan(0.5 * fov_deg * M_PI / 180.0);
  c.fx = f;
  c.fy = f;
  c.cx = 0.5 * W;
  c.cy = 0.5 * H;
  c.pose = pose;
  return c;
}

inline Camera make_orbit_camera(int W, int H, double fov_deg, double azimuth_rad,
                                double elevation_rad, double distance,
                                const Vec3<double>& target = Vec3<double>::Zero()) {
  Vec3<double> eye =
      target + distance * Vec3<double>(std::cos(elevation_rad) * std::cos(azimuth_rad),
                                       std::cos(elevation_rad) * std::sin(azimuth_rad),
                                       std::sin(elevation_rad));
  return make_camera(W, H, fov_deg, look_at<double>(eye, target, {0, 0, 1}));
}

}  // namespace naf
